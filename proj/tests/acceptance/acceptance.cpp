// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: msml_acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fd_net.hpp"
#include "json.hpp"
#include "msml/bench.hpp"
#include "msml/eigen_sym.hpp"
#include "msml/experiment.hpp"
#include "msml/features.hpp"
#include "msml/losses.hpp"
#include "msml/metrics.hpp"
#include "msml/pca.hpp"
#include "msml/train.hpp"
#include "oracles.hpp"

using namespace msml;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work;

// 1
Outcome pca_variance() {
  SynthConfig sc;  // 2000 samples of 8x8 pixels, 13 bands, rank 3, sigma 0.01
  const auto set = split(synthesize(sc), {}, 1);
  const std::size_t pixels = set.size() * set.shape().pixels();
  const auto model = fit_pca(set, 0.4, 7);
  const double top3 = model.cumulative_ratio(3);
  return {pixels >= 100000 && top3 >= 0.999,
          fmt("%zu pixels, top-3 cumulative ratio %.6f (need >= 0.999)", pixels, top3)};
}

// 2
Outcome decorrelation() {
  SynthConfig sc;
  sc.n_samples = 700;
  const auto set = split(synthesize(sc), {}, 1);
  const double fraction = 0.4;
  const std::uint64_t seed = 7;
  const auto model = fit_pca(set, fraction, seed);  // k = B = 13
  // The pixels the covariance was fitted on.
  const auto pool = pca_pool(set);
  const auto fitted = pca_subsample(pool, fraction, seed);
  std::vector<double> rows;
  for (auto i : fitted) {
    const auto z = project_pixels(model, raster_pixels(set[i].raster));
    rows.insert(rows.end(), z.values().begin(), z.values().end());
  }
  Matrix all(rows.size() / 13, 13);
  std::copy(rows.begin(), rows.end(), all.values().begin());
  const auto cov = oracle::covariance(all);
  double diag = 0, off = 0;
  for (std::size_t i = 0; i < 13; ++i) diag = std::max(diag, cov(i, i));
  for (std::size_t i = 0; i < 13; ++i)
    for (std::size_t j = 0; j < 13; ++j)
      if (i != j) off = std::max(off, std::abs(cov(i, j)));
  return {model.k() == 13 && off <= 1e-8 * diag,
          fmt("k=%zu, max |offdiag| / max diag = %.3e (need <= 1e-8)", model.k(), off / diag)};
}

// 3
Outcome eigen_correctness() {
  std::mt19937_64 rng(13);
  double worst_res = 0, worst_rec = 0;
  for (int t = 0; t < 1000; ++t) {
    auto a = oracle::random_matrix(13, 13, rng);
    for (std::size_t i = 0; i < 13; ++i)
      for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
    const double norm = frobenius_norm(a);
    const auto e = eigendecompose_symmetric(a);
    for (std::size_t k = 0; k < 13; ++k) {
      double r2 = 0;
      for (std::size_t i = 0; i < 13; ++i) {
        double av = 0;
        for (std::size_t j = 0; j < 13; ++j) av += a(i, j) * e.vectors(k, j);
        const double d = av - e.values[k] * e.vectors(k, i);
        r2 += d * d;
      }
      worst_res = std::max(worst_res, std::sqrt(r2) / norm);
    }
    for (std::size_t i = 0; i < 13; ++i)
      for (std::size_t j = 0; j < 13; ++j) {
        double rec = 0;
        for (std::size_t k = 0; k < 13; ++k) rec += e.vectors(k, i) * e.values[k] * e.vectors(k, j);
        worst_rec = std::max(worst_rec, std::abs(rec - a(i, j)));
      }
  }
  return {worst_res <= 1e-8 && worst_rec <= 1e-8,
          fmt("1000 matrices, worst |Av - lv|/|A| = %.2e, worst reconstruction error = %.2e (need <= 1e-8)", worst_res,
              worst_rec)};
}

// 4
Outcome softcon_gradients() {
  std::mt19937_64 rng(404);
  const double lambdas[] = {0.0, 0.5, 1.0};
  const double taus[] = {0.07, 0.1, 1.0};
  std::uniform_int_distribution<std::size_t> nd(1, 8), dd(1, 16), cd(1, 9);
  std::size_t entries = 0, bad = 0;
  for (int t = 0; t < 100; ++t) {
    SoftConBatch b;
    const std::size_t n = nd(rng), d = dd(rng);
    b.z = oracle::random_matrix(n, d, rng);
    b.z_prime = oracle::random_matrix(n, d, rng);
    b.labels = oracle::random_labels(n, cd(rng), rng);
    b.lambda = lambdas[t % 3];
    b.tau = taus[(t / 3) % 3];
    const auto g = total_loss_grad(b);
    const auto nz = oracle::central_diff([&] { return total_loss(b); }, b.z, 1e-5);
    const auto nzp = oracle::central_diff([&] { return total_loss(b); }, b.z_prime, 1e-5);
    for (std::size_t i = 0; i < nz.size(); ++i) {
      bad += !oracle::close(g.d_z.values()[i], nz.values()[i], 1e-5, 1e-8);
      bad += !oracle::close(g.d_z_prime.values()[i], nzp.values()[i], 1e-5, 1e-8);
      entries += 2;
    }
  }
  return {bad == 0, fmt("100 batches, %zu entries, %zu outside max(1e-5 rel, 1e-8 abs)", entries, bad)};
}

// 5
Outcome loss_reductions() {
  std::mt19937_64 rng(5);
  bool lambda0 = true, n1 = true, ysim = true;
  double worst_n1 = 0;
  for (int t = 0; t < 200; ++t) {
    SoftConBatch b;
    b.z = oracle::random_matrix(6, 5, rng);
    b.z_prime = oracle::random_matrix(6, 5, rng);
    b.labels = oracle::random_labels(6, 9, rng);
    b.lambda = 0.0;
    b.tau = t % 2 ? 0.1 : 0.07;
    lambda0 = lambda0 && total_loss(b) == contrastive_loss(b);

    SoftConBatch one;
    one.z = oracle::random_matrix(1, 5, rng);
    one.z_prime = oracle::random_matrix(1, 5, rng);
    one.labels = oracle::random_labels(1, 9, rng);
    worst_n1 = std::max(worst_n1, std::abs(contrastive_loss(one)));

    auto y = oracle::random_labels(2, 9, rng);
    y(0, t % 9) = 1;
    for (std::size_t k = 0; k < 9; ++k) y(1, k) = y(0, k);
    const auto s = label_similarity(y);
    ysim = ysim && s(0, 1) == 1.0 && s(1, 0) == 1.0 && s(0, 0) == 1.0;
  }
  n1 = worst_n1 <= 1e-12;
  return {lambda0 && n1 && ysim, fmt("lambda=0 exact: %s; N=1 worst |loss| %.1e; identical labels -> 1 exactly: %s",
                                     lambda0 ? "yes" : "no", worst_n1, ysim ? "yes" : "no")};
}

// 6
Outcome backprop() {
  std::size_t checked = 0, bad = 0, skipped = 0, max_params = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 rng(seed * 7919);
    NetworkSpec spec;
    spec.in_channels = 1 + static_cast<std::uint32_t>(rng() % 3);
    spec.pixels = 1 + static_cast<std::uint32_t>(rng() % 4);
    spec.classes = 2 + static_cast<std::uint32_t>(rng() % 3);
    spec.encoder_hidden = {4 + rng() % 4, 3 + rng() % 3};
    spec.head_hidden = {4 + rng() % 5, 3 + rng() % 4};
    spec.dropout = {0.4, 0.3};
    auto net = build_network(spec, seed);
    for (auto& l : net.layers)
      for (double& b : l.bias) b = std::normal_distribution<double>(0.0, 0.1)(rng);
    net.input_mean.assign(spec.in_channels, 0.2);
    net.input_scale.assign(spec.in_channels, 1.5);
    max_params = std::max(max_params, count_params(net));
    const auto x = oracle::random_matrix(5, net.input_dim(), rng);
    const auto y = oracle::random_labels(5, spec.classes, rng);
    const auto rep = oracle::fd_check_network(net, x, y, seed, 1e-5, 1e-4, 1e-7);
    checked += rep.checked;
    bad += rep.mismatched;
    skipped += rep.skipped;
  }
  return {bad == 0 && max_params <= 500,
          fmt("50 nets (<= %zu params), %zu parameters checked, %zu outside max(1e-4 rel, 1e-7 abs), %zu on a ReLU kink",
              max_params, checked, bad, skipped)};
}

// 7
Outcome training_protocol() {
  EarlyStopping es(5);
  int epochs = 0;
  bool stop = false;
  while (!stop && epochs < 100) stop = es.step(0.42), ++epochs;

  PlateauScheduler plateau(2, 0.1);
  const double lr0 = 1e-3;
  double lr = lr0;
  std::vector<double> lrs;
  for (double v : {1.0, 1.0, 1.0, 1.0}) lrs.push_back(lr = plateau.step(v, lr));
  // lr after epoch 1, 2 unchanged; after epoch 3 reduced once
  const bool plateau_ok = lrs[0] == lr0 && lrs[1] == lr0 && std::abs(lrs[2] - 0.1 * lr0) < 1e-18 &&
                          plateau_scheduler(std::vector<double>{1.0, 0.9, 0.8}, 2, 0.1, lr0) == lr0;
  return {epochs == 6 && plateau_ok,
          fmt("frozen val loss stopped after %d epochs (need 6); plateau lr %.0e -> %.0e after 2 non-improving epochs",
              epochs, lr0, lrs[2])};
}

// 8
Outcome end_to_end() {
  const auto dir = g_work / "matrix";
  fs::remove_all(dir);
  ExperimentConfig cfg;  // 2000 samples, 9 classes, 13 bands, 8x8
  cfg.weights = WeightsMode::Pretrained;
  cfg.train.pretrain_epochs = 5;
  const auto cells = run_matrix(cfg, dir);
  std::string detail;
  bool reports_ok = cells.size() == 4;
  double f1_none_ft = -1;
  for (const auto& c : cells) {
    const auto json_path = dir / (c.name + ".metrics.json");
    bool valid = false;
    try {
      std::ifstream in(json_path);
      const auto j = nlohmann::json::parse(in);
      valid = j.at("schema") == "msml.metrics.v1" && j.at("per_class").size() == 9 && fs::exists(dir / (c.name + ".net1"));
    } catch (const std::exception&) {
      valid = false;
    }
    reports_ok = reports_ok && valid;
    const double f1 = c.metrics.macro_f1.value_or(-1);
    if (c.name == "none_finetuned") f1_none_ft = f1;
    detail += fmt("%s macro-F1 %.4f (%zu epochs)%s; ", c.name.c_str(), f1, c.train.result.log.size(),
                  valid ? "" : " INVALID REPORT");
  }
  detail += "need none_finetuned >= 0.90";
  return {reports_ok && f1_none_ft >= 0.90, detail};
}

// 9
Outcome size_direction() {
  NetworkSpec spec;  // encoder 256,128
  const auto without = build_network(spec, 1);
  spec.in_channels = 3;
  const auto with = build_network(spec, 1);
  const auto s = compare_sizes(with, without);
  const std::size_t expected = (13 - 3) * spec.encoder_hidden[0];
  const std::size_t diff = s.params_without_pca - s.params_with_pca;
  return {s.params_with_pca < s.params_without_pca && diff == expected && s.bytes_with_pca < s.bytes_without_pca,
          fmt("params %zu vs %zu (difference %zu, expected %zu), bytes %zu vs %zu", s.params_with_pca,
              s.params_without_pca, diff, expected, s.bytes_with_pca, s.bytes_without_pca)};
}

// 10
Outcome bench_protocol() {
  SynthConfig sc;
  sc.n_samples = 2510;
  const auto set = synthesize(sc);
  const auto pca = select_components(fit_pca(set, 0.4, 1), FixedK{3});
  NetworkSpec spec;
  spec.in_channels = 3;
  const auto net = build_network(spec, 1);
  const auto r = measure_inference(net, set, 64, 5, true, &pca);
  const std::size_t expected = 5 * ((2510 + 63) / 64);
  return {r.timed_batches == expected && r.batch_ms.size() == expected && r.min_ms <= r.avg_ms && r.avg_ms <= r.max_ms,
          fmt("%zu timed batches (expected %zu), min %.3f <= avg %.3f <= max %.3f ms", r.timed_batches, expected,
              r.min_ms, r.avg_ms, r.max_ms)};
}

// 11
Outcome metrics_oracle() {
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<std::size_t> nd(1, 20);
  double worst = 0;
  std::size_t definedness = 0;
  auto cmp = [&](const std::optional<double>& got, double want) {
    if (std::isnan(want) != !got.has_value()) {
      ++definedness;
      return;
    }
    if (got) worst = std::max(worst, std::abs(*got - want));
  };
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = nd(rng);
    Matrix p(n, 9);
    for (auto& v : p.values()) v = u(rng);
    if (t % 4 == 0)
      for (auto& v : p.values()) v = std::round(v * 4) / 4;  // exact threshold hits
    const auto y = oracle::random_labels(n, 9, rng, u(rng));
    const auto r = report(confusion(p, y, 0.5), 0.5);
    const auto b = oracle::brute_metrics(p, y, 0.5);
    worst = std::max(worst, std::abs(r.accuracy - b.accuracy));
    for (std::size_t k = 0; k < 9; ++k) {
      cmp(r.per_class[k].precision, b.precision[k]);
      cmp(r.per_class[k].recall, b.recall[k]);
      cmp(r.per_class[k].f1, b.f1[k]);
    }
    cmp(r.macro_precision, b.macro_p);
    cmp(r.macro_recall, b.macro_r);
    cmp(r.macro_f1, b.macro_f1);
    cmp(r.micro_precision, b.micro_p);
    cmp(r.micro_recall, b.micro_r);
    cmp(r.micro_f1, b.micro_f1);
  }
  return {worst <= 1e-12 && definedness == 0,
          fmt("200 instances, worst deviation %.1e (need <= 1e-12), %zu definedness mismatches", worst, definedness)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "msml_acceptance";
  fs::create_directories(g_work);
  set_num_threads(1);

  const std::vector<Criterion> criteria{
      {1, "pca-variance", 30, pca_variance},
      {2, "decorrelation", 10, decorrelation},
      {3, "eigen-correctness", 60, eigen_correctness},
      {4, "softcon-gradient", 60, softcon_gradients},
      {5, "loss-reductions", 0, loss_reductions},
      {6, "backprop", 120, backprop},
      {7, "training-protocol", 0, training_protocol},
      {8, "end-to-end-matrix", 600, end_to_end},
      {9, "size-direction", 0, size_direction},
      {10, "bench-protocol", 0, bench_protocol},
      {11, "metrics-oracle", 0, metrics_oracle},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s == 0 || secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::string timing = fmt("%.1f s", secs);
    if (c.budget_s > 0) timing += fmt(" (limit %.0f s)", c.budget_s);
    std::printf("[%s] %2d %-18s %s; %s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
