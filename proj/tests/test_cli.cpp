#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "msml/binary_io.hpp"
#include "msml/config.hpp"
#include "msml/experiment.hpp"
#include "oracles.hpp"

using namespace msml;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const fs::path& dir) {
  auto kv = KeyValueConfig::parse(R"(
    # tiny end-to-end setup
    n_samples = 140
    height = 4
    width = 4
    encoder = mlp-tiny
    head_hidden = 16, 8
    max_epochs = 3
    pretrain_epochs = 2
  )");
  kv.set("report_dir", dir.string());
  return ExperimentConfig::from(kv);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

#ifdef MSML_CLI_PATH
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MSML_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST(Config, ParseOverridesAndRoundTrip) {
  auto kv = KeyValueConfig::parse("a = 1 # trailing\n\n# full line\nb=two\na = 3\n");
  EXPECT_EQ(kv.at("a"), "3");
  EXPECT_EQ(kv.at("b"), "two");
  kv.apply_override("b=four");
  EXPECT_EQ(kv.at("b"), "four");
  EXPECT_THROW(kv.apply_override("novalue"), Error);
  EXPECT_THROW(KeyValueConfig::parse("just words"), Error);

  auto cfg = ExperimentConfig::from(KeyValueConfig::parse("preprocessor = none\nencoder = mlp-small\nratio = 8:1:1\nlr = 0.0005"));
  EXPECT_EQ(cfg.preprocessor, Preprocessor::None);
  EXPECT_EQ(cfg.encoder_hidden, (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(cfg.ratio.train, 8.0);
  EXPECT_EQ(cfg.train.initial_lr, 0.0005);
  const auto again = ExperimentConfig::from(cfg.to_kv());
  EXPECT_EQ(again.to_kv().to_text(), cfg.to_kv().to_text());
}

TEST(Config, Rejections) {
  const auto bad = [](const std::string& text) {
    try {
      ExperimentConfig::from(KeyValueConfig::parse(text));
    } catch (const Error& e) {
      return exit_code(e.code());
    }
    return 0;
  };
  EXPECT_EQ(bad("unknown_key = 1"), 1);
  EXPECT_EQ(bad("preprocessor = both"), 1);
  EXPECT_EQ(bad("ratio = 5:0:1"), 1);
  EXPECT_EQ(bad("ratio = 5:1"), 1);
  EXPECT_EQ(bad("pca_fraction = 0"), 1);
  EXPECT_EQ(bad("threshold = 1"), 1);
  EXPECT_EQ(bad("max_epochs = x"), 1);
  EXPECT_EQ(bad("tau = 0"), 3);
  EXPECT_EQ(exit_code(ErrorCode::BadMagic), 2);
  EXPECT_EQ(exit_code(ErrorCode::NoConvergence), 3);
}

TEST(Pipeline, ArtifactsFlowDownstream) {
  const auto dir = oracle::temp_dir("pipeline");
  auto cfg = small_config(dir);
  const auto set = run_synth(cfg, dir / "d.msb");
  EXPECT_TRUE(fs::exists(manifest_path(dir / "d.msb")));
  EXPECT_EQ(load_dataset(dir / "d.msb"), set);
  EXPECT_EQ(slurp(dir / "d.msb"), (run_synth(cfg, dir / "d2.msb"), slurp(dir / "d2.msb")));

  cfg.dataset = dir / "d.msb";
  const auto fit = run_fit_pca(cfg, dir / "m.pca1");
  EXPECT_EQ(fit.selected.k(), 3u);
  EXPECT_GE(fit.full.cumulative_ratio(3), 0.999);

  cfg.pca_model = dir / "m.pca1";
  const auto projected = run_transform(cfg, dir / "p.msb");
  EXPECT_EQ(projected.shape().bands, 3u);
  EXPECT_EQ(load_dataset(dir / "p.msb").bucket(Split::Test), set.bucket(Split::Test));

  const auto tr = run_train(cfg, dir / "n.net1");
  EXPECT_EQ(tr.result.log.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "n.net1.log"));
  cfg.checkpoint = dir / "n.net1";
  const auto m = run_eval(cfg, dir / "metrics");
  EXPECT_TRUE(fs::exists(dir / "metrics.json"));
  EXPECT_EQ(m.per_class.size(), 9u);

  cfg.bench_samples = 100;
  cfg.bench_repeats = 2;
  const auto b = run_bench(cfg, dir / "bench");
  ASSERT_EQ(b.runs.size(), 3u);
  EXPECT_EQ(b.runs[0].second.timed_batches, 2u * 2u);
  EXPECT_TRUE(b.sizes.with_pca_smaller);
}

TEST(Pipeline, ManifestReproducesRun) {
  const auto dir = oracle::temp_dir("manifest");
  auto cfg = small_config(dir);
  cfg.preprocessor = Preprocessor::None;
  cfg.dataset = dir / "d.msb";
  run_synth(cfg, cfg.dataset);
  cfg.checkpoint = dir / "a.net1";
  run_train(cfg, cfg.checkpoint);
  run_eval(cfg, dir / "a");

  auto replay = ExperimentConfig::from(KeyValueConfig::load(manifest_path(dir / "a.net1")));
  replay.checkpoint = dir / "b.net1";
  run_train(replay, replay.checkpoint);
  run_eval(replay, dir / "b");
  EXPECT_EQ(slurp(dir / "a.net1"), slurp(dir / "b.net1"));
  EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
}

TEST(Pipeline, FrozenEncoderIsBitIdentical) {
  const auto dir = oracle::temp_dir("frozen");
  auto cfg = small_config(dir);
  cfg.dataset = dir / "d.msb";
  const auto set = run_synth(cfg, cfg.dataset);
  cfg.pca_model = dir / "m.pca1";
  run_fit_pca(cfg, cfg.pca_model);
  const auto source = pretrain_source(cfg, set, dir / "src.net1");

  cfg.weights = WeightsMode::Pretrained;
  cfg.pretrained_checkpoint = dir / "src.net1";
  cfg.finetune = FineTuning::Frozen;

  cfg.preprocessor = Preprocessor::None;
  const auto same = run_train(cfg, dir / "none.net1");
  EXPECT_FALSE(same.first_layer_replaced);
  for (std::size_t l = 0; l < source.encoder_depth(); ++l) {
    EXPECT_EQ(same.result.net.layers[l].weight, source.layers[l].weight);
    EXPECT_EQ(same.result.net.layers[l].bias, source.layers[l].bias);
  }

  cfg.preprocessor = Preprocessor::Pca;
  const auto changed = run_train(cfg, dir / "pca.net1");
  EXPECT_TRUE(changed.first_layer_replaced);
  EXPECT_TRUE(changed.result.net.layers[0].trainable);
  EXPECT_EQ(changed.result.net.layers[0].in(), 3u);
  for (std::size_t l = 1; l < source.encoder_depth(); ++l) {
    EXPECT_FALSE(changed.result.net.layers[l].trainable);
    EXPECT_EQ(changed.result.net.layers[l].weight, source.layers[l].weight);
    EXPECT_EQ(changed.result.net.layers[l].bias, source.layers[l].bias);
  }

  cfg.finetune = FineTuning::Finetuned;
  const auto tuned = run_train(cfg, dir / "tuned.net1");
  EXPECT_NE(tuned.result.net.layers[1].weight, source.layers[1].weight);
}

TEST(Pipeline, OracleCheckpointScoresPerfectly) {
  // Labels are written into the pixels and a hand-built net reads them back.
  const auto dir = oracle::temp_dir("oracle_eval");
  std::mt19937_64 rng(21);
  std::vector<Sample> samples(70);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].raster = BandRaster(9, 1, 1);
    samples[i].labels.resize(9);
    for (std::uint32_t k = 0; k < 9; ++k) {
      samples[i].labels[k] = static_cast<std::uint8_t>((rng() >> 7) & 1);
      samples[i].raster.at(k, 0) = samples[i].labels[k];
    }
  }
  const auto set = split(SampleSet({9, 1, 1}, 9, samples), {}, 1);
  save_sampleset(set, dir / "leak.msb");
  save_split_sidecar(set, dir / "leak.msb");

  Network net;
  net.in_channels = 9;
  net.pixels = 1;
  net.input_mean.assign(9, 0.0);
  net.input_scale.assign(9, 1.0);
  Layer stem;
  stem.kind = LayerKind::PixelDense;
  stem.weight = msml::Matrix::identity(9);
  stem.bias.assign(9, 0.0);
  Layer out;
  out.kind = LayerKind::Dense;
  out.activation = Activation::Identity;
  out.role = LayerRole::Head;
  out.weight = msml::Matrix::identity(9);
  for (double& v : out.weight.values()) v *= 20.0;
  out.bias.assign(9, -10.0);
  net.layers = {stem, out};
  save_network(net, dir / "oracle.net1");

  auto cfg = small_config(dir);
  cfg.preprocessor = Preprocessor::None;
  cfg.dataset = dir / "leak.msb";
  cfg.checkpoint = dir / "oracle.net1";
  const auto r = run_eval(cfg, dir / "oracle");
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(*r.macro_f1, 1.0);
  EXPECT_EQ(*r.micro_f1, 1.0);
  EXPECT_EQ(*r.macro_precision, 1.0);
  EXPECT_EQ(*r.macro_recall, 1.0);
}

TEST(Pipeline, FullModelDecorrelates) {
  const auto dir = oracle::temp_dir("k13");
  auto cfg = small_config(dir);
  cfg.dataset = dir / "d.msb";
  run_synth(cfg, cfg.dataset);
  cfg.pca_k = 13;
  cfg.pca_fraction = 1.0;
  const auto fit = run_fit_pca(cfg, dir / "full.pca1");
  EXPECT_EQ(fit.selected.k(), 13u);
  const auto set = load_dataset(cfg.dataset);
  const auto pool = pca_pool(set);
  std::vector<double> rows;
  for (auto i : pool) {
    const auto z = project_pixels(fit.selected, raster_pixels(set[i].raster));
    rows.insert(rows.end(), z.values().begin(), z.values().end());
  }
  msml::Matrix all(rows.size() / 13, 13);
  std::copy(rows.begin(), rows.end(), all.values().begin());
  const auto cov = oracle::covariance(all);
  double diag = 0;
  for (std::size_t i = 0; i < 13; ++i) diag = std::max(diag, cov(i, i));
  for (std::size_t i = 0; i < 13; ++i)
    for (std::size_t j = 0; j < 13; ++j)
      if (i != j) {
        EXPECT_LE(std::abs(cov(i, j)), 1e-8 * diag);
      }
}

#ifdef MSML_CLI_PATH
TEST(Cli, ExitCodesAndMessages) {
  const auto dir = oracle::temp_dir("cli");
  EXPECT_EQ(run_cli("synth --ratio 5:0:1 --out " + (dir / "x.msb").string(), dir / "log1"), 1);
  EXPECT_NE(slurp(dir / "log1").find("ratio"), std::string::npos);
  EXPECT_EQ(run_cli("fit-pca --dataset " + (dir / "missing.msb").string(), dir / "log2"), 2);
  EXPECT_EQ(run_cli("no-such-command", dir / "log3"), 1);

  std::ofstream(dir / "cfg.txt") << "n_samples = 60\nheight = 2\nwidth = 2\n";
  const auto ds = (dir / "d.msb").string();
  EXPECT_EQ(run_cli("synth --config " + (dir / "cfg.txt").string() + " --seed 4 --out " + ds, dir / "log4"), 0);
  EXPECT_EQ(run_cli("fit-pca --fraction 0 --dataset " + ds, dir / "log5"), 1);
  EXPECT_EQ(run_cli("fit-pca --dataset " + ds + " --out " + (dir / "m.pca1").string(), dir / "log6"), 0);
  EXPECT_NE(slurp(dir / "log6").find("cumulative_ratio_top3="), std::string::npos);
  EXPECT_EQ(run_cli("train --set tau=-1 --dataset " + ds, dir / "log7"), 3);
  EXPECT_NE(slurp(manifest_path(dir / "d.msb")).find("seed = 4"), std::string::npos);
}
#endif
