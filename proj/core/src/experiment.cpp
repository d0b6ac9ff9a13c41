#include "msml/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "msml/binary_io.hpp"
#include "msml/features.hpp"

namespace msml {

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidRule:
      return 1;
    case ErrorCode::NotSymmetric:
    case ErrorCode::NoConvergence:
    case ErrorCode::NonPositiveTemperature:
    case ErrorCode::NumericalFailure:
      return 3;
    default:
      return 2;
  }
}

StageSeeds stage_seeds(std::uint64_t seed) noexcept {
  return {seed, seed + 1, seed + 2, seed + 3, seed + 4};
}

SampleSet load_dataset(const std::filesystem::path& path) {
  return apply_split_sidecar(load_sampleset(path), path);
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
  return std::filesystem::path(artifact.string() + ".manifest");
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command, const std::filesystem::path& artifact) {
  const auto s = stage_seeds(cfg.seed);
  std::ostringstream os;
  os << "# command: " << command << "\n"
     << "# artifact: " << artifact.string() << "\n"
     << "# seeds: synth=" << s.synth << " split=" << s.split << " pca=" << s.pca << " init=" << s.init
     << " train=" << s.train << "\n"
     << cfg.to_kv().to_text();
  const auto text = os.str();
  io::write_file(manifest_path(artifact), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void require_path(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw Error(ErrorCode::InvalidConfig, std::string("config key '") + key + "' is required");
}

// Train/val/test tags, splitting on the fly when the file carries none.
SampleSet ensure_split(const SampleSet& set, const ExperimentConfig& cfg) {
  if (set.bucket(Split::Unassigned).size() == set.size()) return split(set, cfg.ratio, stage_seeds(cfg.seed).split);
  return set;
}

std::optional<PcaModel> load_pca_for(const ExperimentConfig& cfg) {
  if (cfg.preprocessor != Preprocessor::Pca) return std::nullopt;
  require_path(cfg.pca_model, "pca_model");
  return load_pca(cfg.pca_model);
}

std::string log_text(const TrainResult& r) {
  std::ostringstream os;
  os.precision(10);
  for (std::size_t i = 0; i < r.pretrain_losses.size(); ++i)
    os << "pretrain_epoch=" << i + 1 << " loss=" << r.pretrain_losses[i] << "\n";
  for (const auto& e : r.log)
    os << "epoch=" << e.epoch << " train_loss=" << e.train_loss << " val_loss=" << e.val_loss << " lr=" << e.lr
       << " improved=" << (e.improved ? 1 : 0) << "\n";
  os << "best_epoch=" << r.best_epoch << " stopped_early=" << (r.stopped_early ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace

NetworkSpec network_spec(const ExperimentConfig& cfg, std::uint32_t in_channels, std::uint32_t pixels,
                         std::uint32_t classes) {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  spec.pixels = pixels;
  spec.classes = classes;
  spec.encoder_hidden = cfg.encoder_hidden;
  spec.head_hidden = cfg.head_hidden;
  spec.dropout = cfg.dropout;
  return spec;
}

SampleSet run_synth(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  SynthConfig sc = cfg.synth;
  sc.seed = stage_seeds(cfg.seed).synth;
  const SampleSet set = split(synthesize(sc), cfg.ratio, stage_seeds(cfg.seed).split);
  save_sampleset(set, out);
  save_split_sidecar(set, out);
  write_manifest(cfg, "synth", out);
  return set;
}

PcaFit run_fit_pca(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  require_path(cfg.dataset, "dataset");
  const SampleSet set = load_dataset(cfg.dataset);
  PcaFit fit;
  fit.full = fit_pca(set, cfg.pca_fraction, stage_seeds(cfg.seed).pca);
  fit.selected = cfg.pca_variance > 0.0 ? select_components(fit.full, VarianceThreshold{cfg.pca_variance})
                                        : select_components(fit.full, FixedK{cfg.pca_k});
  save_pca(fit.selected, out);
  write_manifest(cfg, "fit-pca", out);
  return fit;
}

SampleSet run_transform(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  require_path(cfg.dataset, "dataset");
  require_path(cfg.pca_model, "pca_model");
  const SampleSet projected = project(load_pca(cfg.pca_model), load_dataset(cfg.dataset));
  save_sampleset(projected, out);
  save_split_sidecar(projected, out);
  write_manifest(cfg, "transform", out);
  return projected;
}

Network pretrain_source(const ExperimentConfig& cfg, const SampleSet& set, const std::filesystem::path& out) {
  const SampleSet tagged = ensure_split(set, cfg);
  const auto idx = tagged.bucket(Split::Train);
  if (idx.empty()) throw Error(ErrorCode::EmptyBucket, "train bucket is empty");
  const auto& shape = tagged.shape();
  Network net = build_network(
      network_spec(cfg, shape.bands, static_cast<std::uint32_t>(shape.pixels()), tagged.classes()),
      stage_seeds(cfg.seed).init);
  const Matrix x = sample_inputs(tagged, idx);
  fit_input_scaling(net, x);
  TrainConfig tc = cfg.train;
  tc.seed = stage_seeds(cfg.seed).train;
  pretrain_encoder(net, x, sample_targets(tagged, idx), tc);
  save_network(net, out);
  write_manifest(cfg, "pretrain", out);
  return net;
}

TrainRun run_train(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  require_path(cfg.dataset, "dataset");
  const SampleSet set = ensure_split(load_dataset(cfg.dataset), cfg);
  const auto pca = load_pca_for(cfg);
  const PcaModel* pca_ptr = pca ? &*pca : nullptr;
  if (pca && pca->bands() != set.shape().bands)
    throw Error(ErrorCode::DimensionMismatch, "PCA model expects " + std::to_string(pca->bands()) + " bands, dataset has " +
                                                  std::to_string(set.shape().bands));

  const auto train_idx = set.bucket(Split::Train);
  const auto val_idx = set.bucket(Split::Val);
  if (train_idx.empty()) throw Error(ErrorCode::EmptyBucket, "train bucket is empty");
  if (val_idx.empty()) throw Error(ErrorCode::EmptyBucket, "val bucket is empty");
  const Matrix train_x = sample_inputs(set, train_idx, pca_ptr);
  const Matrix val_x = sample_inputs(set, val_idx, pca_ptr);

  const auto channels = static_cast<std::uint32_t>(pca ? pca->k() : set.shape().bands);
  const auto pixels = static_cast<std::uint32_t>(set.shape().pixels());
  const auto seeds = stage_seeds(cfg.seed);
  Network net = build_network(network_spec(cfg, channels, pixels, set.classes()), seeds.init);

  TrainRun run;
  bool keep_scaling = false;
  if (cfg.weights == WeightsMode::Pretrained) {
    require_path(cfg.pretrained_checkpoint, "pretrained_checkpoint");
    const Network src = load_network(cfg.pretrained_checkpoint);
    const std::size_t depth = net.encoder_depth();
    if (src.encoder_depth() != depth)
      throw Error(ErrorCode::ShapeMismatch, "pretrained encoder depth differs from the configured encoder");
    for (std::size_t l = 0; l < depth; ++l) {
      const bool first = l == 0;
      if (src.layers[l].out() != net.layers[l].out() || (!first && src.layers[l].in() != net.layers[l].in()))
        throw Error(ErrorCode::ShapeMismatch, "pretrained encoder layer " + std::to_string(l) + " has other widths");
    }
    run.first_layer_replaced = src.in_channels != channels;
    for (std::size_t l = run.first_layer_replaced ? 1 : 0; l < depth; ++l) net.layers[l] = src.layers[l];
    if (!run.first_layer_replaced) {
      net.input_mean = src.input_mean;
      net.input_scale = src.input_scale;
      keep_scaling = true;
    }
  }
  if (!keep_scaling) fit_input_scaling(net, train_x);
  if (cfg.finetune == FineTuning::Frozen) {
    for (std::size_t l = 0; l < net.encoder_depth(); ++l)
      net.layers[l].trainable = l == 0 && run.first_layer_replaced;
  }

  TrainConfig tc = cfg.train;
  tc.seed = seeds.train;
  run.result = train(std::move(net), train_x, sample_targets(set, train_idx), val_x, sample_targets(set, val_idx), tc);
  save_network(run.result.net, out);
  write_text(std::filesystem::path(out.string() + ".log"), log_text(run.result));
  write_manifest(cfg, "train", out);
  return run;
}

MetricsReport run_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_prefix) {
  require_path(cfg.checkpoint, "checkpoint");
  require_path(cfg.dataset, "dataset");
  const Network net = load_network(cfg.checkpoint);
  const SampleSet set = ensure_split(load_dataset(cfg.dataset), cfg);
  const auto idx = set.bucket(cfg.eval_split);
  if (idx.empty()) throw Error(ErrorCode::EmptyBucket, std::string(to_string(cfg.eval_split)) + " bucket is empty");

  std::optional<PcaModel> pca;
  if (cfg.preprocessor == Preprocessor::Pca || net.in_channels != set.shape().bands) {
    require_path(cfg.pca_model, "pca_model");
    pca = load_pca(cfg.pca_model);
    if (pca->k() != net.in_channels || pca->bands() != set.shape().bands)
      throw Error(ErrorCode::DimensionMismatch, "PCA model does not bridge the dataset bands to the network input");
  }
  if (net.classes() != set.classes())
    throw Error(ErrorCode::DimensionMismatch, "checkpoint predicts " + std::to_string(net.classes()) +
                                                  " classes, dataset has " + std::to_string(set.classes()));
  const Matrix probs = predict_proba(net, sample_inputs(set, idx, pca ? &*pca : nullptr));
  const MetricsReport r = report(confusion(probs, sample_targets(set, idx), cfg.threshold), cfg.threshold);
  write_metrics(r, std::filesystem::path(out_prefix.string() + ".txt"), std::filesystem::path(out_prefix.string() + ".json"));
  write_manifest(cfg, "eval", std::filesystem::path(out_prefix.string() + ".txt"));
  return r;
}

BenchRun run_bench(const ExperimentConfig& cfg, const std::filesystem::path& out_prefix) {
  SampleSet set;
  if (!cfg.dataset.empty()) {
    set = load_dataset(cfg.dataset);
  } else {
    SynthConfig sc = cfg.synth;
    sc.n_samples = static_cast<std::uint32_t>(cfg.bench_samples);
    sc.seed = stage_seeds(cfg.seed).synth;
    set = synthesize(sc);
  }
  if (set.size() > cfg.bench_samples) {
    std::vector<Sample> head(set.samples().begin(), set.samples().begin() + static_cast<std::ptrdiff_t>(cfg.bench_samples));
    set = SampleSet(set.shape(), set.classes(), std::move(head), set.split_seed());
  }

  PcaModel pca = cfg.pca_model.empty()
                     ? select_components(fit_pca(set, cfg.pca_fraction, stage_seeds(cfg.seed).pca), FixedK{cfg.pca_k})
                     : load_pca(cfg.pca_model);
  const auto pixels = static_cast<std::uint32_t>(set.shape().pixels());
  const auto seeds = stage_seeds(cfg.seed);
  Network with_pca, without_pca;
  if (!cfg.checkpoint.empty()) {
    // A given checkpoint fixes one side; the other is built with the same layout.
    const Network ck = load_network(cfg.checkpoint);
    Network other = ck;
    replace_first_layer(other, ck.in_channels == pca.k() ? set.shape().bands : static_cast<std::uint32_t>(pca.k()),
                        seeds.init);
    other.pixels = pixels;
    if (ck.in_channels == pca.k()) {
      with_pca = ck;
      without_pca = other;
    } else {
      with_pca = other;
      without_pca = ck;
    }
  } else {
    with_pca = build_network(network_spec(cfg, static_cast<std::uint32_t>(pca.k()), pixels, set.classes()), seeds.init);
    without_pca = build_network(network_spec(cfg, set.shape().bands, pixels, set.classes()), seeds.init);
  }

  BenchRun run;
  run.runs.emplace_back("with_pca_timed", measure_inference(with_pca, set, cfg.bench_batch, cfg.bench_repeats, true, &pca));
  run.runs.emplace_back("with_pca_pretransformed",
                        measure_inference(with_pca, set, cfg.bench_batch, cfg.bench_repeats, false, &pca));
  run.runs.emplace_back("without_pca",
                        measure_inference(without_pca, set, cfg.bench_batch, cfg.bench_repeats, false, nullptr));
  run.sizes = compare_sizes(with_pca, without_pca);
  write_text(std::filesystem::path(out_prefix.string() + ".txt"), bench_to_text(run.runs, run.sizes));
  write_text(std::filesystem::path(out_prefix.string() + ".json"), bench_to_json(run.runs, run.sizes));
  write_manifest(cfg, "bench", std::filesystem::path(out_prefix.string() + ".txt"));
  return run;
}

std::vector<MatrixCell> run_matrix(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ExperimentConfig base = cfg;
  if (base.dataset.empty()) {
    base.dataset = dir / "dataset.msb";
    run_synth(base, base.dataset);
  }
  if (base.pca_model.empty()) {
    base.pca_model = dir / "pca.pca1";
    run_fit_pca(base, base.pca_model);
  }
  if (base.weights == WeightsMode::Pretrained && base.pretrained_checkpoint.empty()) {
    base.pretrained_checkpoint = dir / "source.net1";
    pretrain_source(base, load_dataset(base.dataset), base.pretrained_checkpoint);
  }

  std::vector<MatrixCell> cells;
  for (const auto pre : {Preprocessor::Pca, Preprocessor::None}) {
    for (const auto ft : {FineTuning::Finetuned, FineTuning::Frozen}) {
      MatrixCell cell;
      cell.name = std::string(to_string(pre)) + "_" + to_string(ft);
      cell.cfg = base;
      cell.cfg.preprocessor = pre;
      cell.cfg.finetune = ft;
      cell.cfg.checkpoint = dir / (cell.name + ".net1");
      cell.train = run_train(cell.cfg, cell.cfg.checkpoint);
      cell.metrics = run_eval(cell.cfg, dir / (cell.name + ".metrics"));
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace msml
