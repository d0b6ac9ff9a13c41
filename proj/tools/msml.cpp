#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msml/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::vector<std::string> overrides;
  // Per-subcommand flags that map one-to-one onto config keys.
  std::map<std::string, std::string> keys;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "base seed");
  sub->add_option("--out", o.out, "output path");
  sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--set", o.overrides, "override a config key (key=value), repeatable");
}

void add_key(CLI::App* sub, Options& o, const std::string& flag, const std::string& key, const std::string& help) {
  sub->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o.keys[key] = v; }, help);
}

msml::ExperimentConfig resolve(const Options& o) {
  msml::KeyValueConfig kv = o.config.empty() ? msml::KeyValueConfig{} : msml::KeyValueConfig::load(o.config);
  for (const auto& [k, v] : o.keys) kv.set(k, v);
  for (const auto& a : o.overrides) kv.apply_override(a);
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  if (o.threads) kv.set("threads", std::to_string(*o.threads));
  auto cfg = msml::ExperimentConfig::from(kv);
  msml::set_num_threads(cfg.threads);
  return cfg;
}

std::filesystem::path out_or(const Options& o, const char* fallback) {
  return o.out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(o.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msml: multispectral multi-label experiments"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "synthesize and split a dataset");
  auto* fit = app.add_subcommand("fit-pca", "fit a PCA model on a dataset");
  auto* transform = app.add_subcommand("transform", "project a dataset with a PCA model");
  auto* train = app.add_subcommand("train", "train a network");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* bench = app.add_subcommand("bench", "time inference with and without PCA");
  auto* matrix = app.add_subcommand("matrix", "run {pca,none} x {finetuned,frozen}");
  for (auto* sub : {synth, fit, transform, train, eval, bench, matrix}) add_common(sub, o);

  add_key(synth, o, "--samples", "n_samples", "sample count");
  add_key(synth, o, "--ratio", "ratio", "train:val:test ratio");
  for (auto* sub : {fit, transform, train, eval, bench}) add_key(sub, o, "--dataset", "dataset", "MSB1 dataset");
  for (auto* sub : {transform, train, eval, bench}) add_key(sub, o, "--pca", "pca_model", "PCA1 model");
  add_key(fit, o, "--fraction", "pca_fraction", "subsample fraction in (0, 1]");
  add_key(fit, o, "-k,--k", "pca_k", "components to keep");
  add_key(fit, o, "--variance", "pca_variance", "keep components up to this cumulative ratio");
  add_key(train, o, "--preprocessor", "preprocessor", "pca | none");
  add_key(train, o, "--finetune", "finetune", "finetuned | frozen");
  add_key(train, o, "--weights", "weights", "fresh | pretrained");
  add_key(train, o, "--pretrained", "pretrained_checkpoint", "NET1 checkpoint with a pretrained encoder");
  add_key(train, o, "--loss", "loss_mode", "bce | softcon_pretrain");
  add_key(eval, o, "--checkpoint", "checkpoint", "NET1 checkpoint");
  add_key(eval, o, "--threshold", "threshold", "decision threshold in (0, 1)");
  add_key(eval, o, "--split", "eval_split", "train | val | test");
  add_key(bench, o, "--checkpoint", "checkpoint", "NET1 checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto cfg = resolve(o);
    if (synth->parsed()) {
      const auto path = out_or(o, "dataset.msb");
      const auto set = msml::run_synth(cfg, path);
      std::printf("wrote %s: %zu samples (train %zu, val %zu, test %zu)\n", path.string().c_str(), set.size(),
                  set.bucket(msml::Split::Train).size(), set.bucket(msml::Split::Val).size(),
                  set.bucket(msml::Split::Test).size());
    } else if (fit->parsed()) {
      const auto path = out_or(o, "model.pca1");
      const auto r = msml::run_fit_pca(cfg, path);
      std::printf("wrote %s: k=%zu of %zu bands\n", path.string().c_str(), r.selected.k(), r.full.bands());
      std::printf("cumulative_ratio_top3=%.6f\n", r.full.cumulative_ratio(std::min<std::size_t>(3, r.full.k())));
      std::printf("cumulative_ratio_selected=%.6f\n", r.full.cumulative_ratio(r.selected.k()));
    } else if (transform->parsed()) {
      const auto path = out_or(o, "projected.msb");
      const auto set = msml::run_transform(cfg, path);
      std::printf("wrote %s: %zu samples, %u bands\n", path.string().c_str(), set.size(), set.shape().bands);
    } else if (train->parsed()) {
      const auto path = out_or(o, "model.net1");
      const auto run = msml::run_train(cfg, path);
      std::printf("wrote %s: %zu epochs, best epoch %d, best val loss %.6f\n", path.string().c_str(),
                  run.result.log.size(), run.result.best_epoch,
                  run.result.log.at(static_cast<std::size_t>(run.result.best_epoch - 1)).val_loss);
    } else if (eval->parsed()) {
      const auto prefix = out_or(o, "metrics");
      const auto r = msml::run_eval(cfg, prefix);
      std::fputs(msml::metrics_to_text(r).c_str(), stdout);
    } else if (bench->parsed()) {
      const auto prefix = out_or(o, "bench");
      const auto r = msml::run_bench(cfg, prefix);
      std::fputs(msml::bench_to_text(r.runs, r.sizes).c_str(), stdout);
    } else if (matrix->parsed()) {
      const auto dir = out_or(o, "matrix");
      for (const auto& cell : msml::run_matrix(cfg, dir))
        std::printf("%-16s macro_f1=%s accuracy=%.4f\n", cell.name.c_str(),
                    cell.metrics.macro_f1 ? std::to_string(*cell.metrics.macro_f1).c_str() : "undefined",
                    cell.metrics.accuracy);
    }
  } catch (const msml::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return msml::exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
