#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msml/bench.hpp"
#include "msml/config.hpp"
#include "msml/error.hpp"
#include "msml/metrics.hpp"
#include "msml/pca.hpp"
#include "msml/train.hpp"

namespace msml {

/// Process exit status for an error: 1 usage, 2 data, 3 numerical.
int exit_code(ErrorCode code) noexcept;

/// Loads an MSB1 file and applies its split sidecar if present.
SampleSet load_dataset(const std::filesystem::path& path);

/// "<artifact>.manifest": the resolved config (itself a loadable config),
/// preceded by comment lines naming the command and derived seeds.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);
void write_manifest(const ExperimentConfig& cfg, const std::string& command, const std::filesystem::path& artifact);

// Seeds used by each stage, all derived from cfg.seed.
struct StageSeeds {
  std::uint64_t synth, split, pca, init, train;
};
StageSeeds stage_seeds(std::uint64_t seed) noexcept;

/// Synthesizes, splits and writes the dataset (plus split sidecar).
SampleSet run_synth(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct PcaFit {
  PcaModel full;
  PcaModel selected;
};
/// Fits on cfg.dataset and writes the selected model.
PcaFit run_fit_pca(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Projects cfg.dataset with cfg.pca_model and writes a k-band MSB1 file.
SampleSet run_transform(const ExperimentConfig& cfg, const std::filesystem::path& out);

struct TrainRun {
  TrainResult result;
  bool first_layer_replaced = false;
};
/// Builds (or loads) the network per cfg, trains it and writes the
/// checkpoint to `out`, the epoch log to "<out>.log" and a manifest.
TrainRun run_train(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Evaluates cfg.checkpoint on cfg.eval_split of cfg.dataset. Writes
/// "<out_prefix>.txt" and "<out_prefix>.json".
MetricsReport run_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_prefix);

struct BenchRun {
  std::vector<std::pair<std::string, BenchReport>> runs;
  SizeComparison sizes;
};
/// Times a PCA network (PCA inside and outside the timed region) and a
/// raw-band network on cfg.bench_samples samples.
BenchRun run_bench(const ExperimentConfig& cfg, const std::filesystem::path& out_prefix);

struct MatrixCell {
  std::string name;
  ExperimentConfig cfg;
  TrainRun train;
  MetricsReport metrics;
};
/// {pca, none} x {finetuned, frozen} under `dir`. Synthesizes the dataset,
/// fits PCA and pretrains a source encoder when the config does not name them.
std::vector<MatrixCell> run_matrix(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Pretrains a raw-band encoder with SoftCon on the train split and saves it.
Network pretrain_source(const ExperimentConfig& cfg, const SampleSet& set, const std::filesystem::path& out);

/// The network spec implied by cfg for `in_channels` input channels.
NetworkSpec network_spec(const ExperimentConfig& cfg, std::uint32_t in_channels, std::uint32_t pixels,
                         std::uint32_t classes);

}  // namespace msml
