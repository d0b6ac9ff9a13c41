#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "msml/dataformat.hpp"
#include "msml/net.hpp"
#include "msml/train.hpp"

namespace msml {

/// Flat "key = value" text; '#' starts a comment. Later assignments win.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& at(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Applies "key=value".
  void apply_override(const std::string& assignment);
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class Preprocessor { Pca, None };
enum class WeightsMode { Fresh, Pretrained };
enum class FineTuning { Finetuned, Frozen };

/// Everything one run needs; round-trips through KeyValueConfig so a run's
/// manifest can be fed back in as its config.
struct ExperimentConfig {
  // paths
  std::filesystem::path dataset;
  std::filesystem::path pca_model;
  std::filesystem::path checkpoint;
  std::filesystem::path pretrained_checkpoint;
  std::filesystem::path report_dir = ".";
  std::uint64_t seed = 1;
  int threads = 1;

  // synthesis + split
  SynthConfig synth;
  SplitRatio ratio;

  // PCA
  double pca_fraction = 0.4;
  std::size_t pca_k = 3;
  double pca_variance = 0.0;  // > 0 selects by variance threshold instead of pca_k

  // model
  Preprocessor preprocessor = Preprocessor::Pca;
  std::string encoder = "mlp";
  std::vector<std::size_t> encoder_hidden{256, 128};
  std::vector<std::size_t> head_hidden{512, 256};
  std::vector<double> dropout{0.4, 0.3};
  WeightsMode weights = WeightsMode::Fresh;
  FineTuning finetune = FineTuning::Finetuned;
  TrainConfig train;

  // evaluation / benchmark
  double threshold = 0.5;
  Split eval_split = Split::Test;
  std::size_t bench_samples = 2510;
  std::size_t bench_repeats = 5;
  std::size_t bench_batch = 64;

  static ExperimentConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  void validate() const;
};

/// Encoder widths for a named preset ("mlp", "mlp-small", "mlp-tiny").
std::vector<std::size_t> encoder_preset(const std::string& name);

const char* to_string(Preprocessor p) noexcept;
const char* to_string(WeightsMode w) noexcept;
const char* to_string(FineTuning f) noexcept;

}  // namespace msml
