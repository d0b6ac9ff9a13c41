#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "msml/dataformat.hpp"
#include "msml/eigen_sym.hpp"
#include "msml/error.hpp"
#include "msml/pca.hpp"
#include "oracles.hpp"

using namespace msml;

namespace {

SampleSet from_pixels(const std::vector<std::vector<float>>& pixels_by_sample, std::uint32_t bands) {
  std::vector<Sample> s;
  for (const auto& px : pixels_by_sample) {
    Sample smp;
    const auto n = static_cast<std::uint32_t>(px.size() / bands);
    smp.raster = BandRaster(bands, 1, n);
    for (std::uint32_t p = 0; p < n; ++p)
      for (std::uint32_t b = 0; b < bands; ++b) smp.raster.at(b, p) = px[p * bands + b];
    smp.labels = {1};
    s.push_back(std::move(smp));
  }
  const auto w = static_cast<std::uint32_t>(pixels_by_sample.front().size() / bands);
  return SampleSet({bands, 1, w}, 1, std::move(s));
}

SynthConfig small_synth(std::uint32_t n = 200) {
  SynthConfig cfg;
  cfg.n_samples = n;
  cfg.height = cfg.width = 4;
  return cfg;
}

}  // namespace

TEST(Standardizer, ConstantBandIsDegenerate) {
  const auto set = from_pixels({{5, 1, 5, 3, 5, 1, 5, 3}}, 2);
  const auto st = fit_standardizer(set, Split::Unassigned);
  EXPECT_DOUBLE_EQ(st.mean()[0], 5.0);
  EXPECT_TRUE(st.degenerate()[0]);
  EXPECT_FALSE(st.degenerate()[1]);
  EXPECT_DOUBLE_EQ(st.stddev()[0], 1.0);
  EXPECT_DOUBLE_EQ(st.mean()[1], 2.0);
  EXPECT_DOUBLE_EQ(st.stddev()[1], 1.0);
  EXPECT_THROW(fit_standardizer(set, Split::Unassigned, true), Error);
}

TEST(Standardizer, MatchesTwoPass) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(3.0, 2.0);
  Standardizer a(3), b(3), whole(3);
  msml::Matrix all(200000, 3);
  for (std::size_t i = 0; i < all.rows(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) all(i, j) = nd(rng) * (j + 1) + 1e3 * j;
    (i % 3 ? a : b).add_pixel(all.row(i));
    whole.add_pixel(all.row(i));
  }
  a.merge(b);
  const auto cov = oracle::covariance(all);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < all.rows(); ++i) mean += all(i, j);
    mean /= all.rows();
    EXPECT_NEAR(whole.mean()[j], mean, 1e-9 * std::abs(mean) + 1e-12);
    EXPECT_NEAR(whole.variance()[j], cov(j, j), 1e-9 * cov(j, j));
    EXPECT_NEAR(a.variance()[j], cov(j, j), 1e-9 * cov(j, j));
  }
}

TEST(Standardizer, NeedsTwoPixels) {
  Standardizer s(2);
  const double px[2] = {1, 2};
  s.add_pixel(px);
  EXPECT_THROW(s.stddev(), Error);
}

TEST(CovAccumulator, TwoPointCase) {
  CovAccumulator acc(2);
  const double p1[2] = {1, 0}, p2[2] = {-1, 0};
  acc.add(p1);
  acc.add(p2);
  const auto c = acc.covariance();
  EXPECT_DOUBLE_EQ(c(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(c(1, 1), 0.0);
  EXPECT_THROW(CovAccumulator(2).covariance(), Error);
}

TEST(CovAccumulator, MergeMatchesConcatenation) {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_matrix(500, 6, rng, 3.0);
  CovAccumulator whole(6), a(6), b(6), c(6);
  accumulate(whole, x);
  for (std::size_t i = 0; i < x.rows(); ++i) (i < 123 ? a : i < 400 ? b : c).add(x.row(i));
  CovAccumulator left = a;
  left.merge(b);
  left.merge(c);
  CovAccumulator right = b;
  right.merge(c);
  CovAccumulator a2 = a;
  a2.merge(right);
  const auto ref = oracle::covariance(x);
  const auto w = whole.covariance(), l = left.covariance(), r = a2.covariance();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const double tol = 1e-10 * std::max(1.0, std::abs(ref(i, j)));
      EXPECT_NEAR(w(i, j), ref(i, j), tol);
      EXPECT_NEAR(l(i, j), w(i, j), tol);
      EXPECT_NEAR(r(i, j), l(i, j), tol);
      EXPECT_EQ(w(i, j), w(j, i));
    }
  EXPECT_THROW(accumulate(whole, msml::Matrix(2, 5)), Error);
}

TEST(Pca, ModelInvariants) {
  const auto set = split(synthesize(small_synth()), {}, 1);
  const auto m = fit_pca(set, 0.4, 3);
  ASSERT_EQ(m.k(), 13u);
  for (std::size_t i = 0; i < 13; ++i) {
    if (i) {
      EXPECT_GE(m.eigenvalues[i - 1], m.eigenvalues[i]);
    }
    EXPECT_GE(m.eigenvalues[i], 0.0);
    for (std::size_t j = 0; j < 13; ++j)
      EXPECT_NEAR(oracle::row_dot(m.components, i, m.components, j), i == j ? 1.0 : 0.0, 1e-8);
  }
  EXPECT_NEAR(std::accumulate(m.explained_ratio.begin(), m.explained_ratio.end(), 0.0), 1.0, 1e-9);
  EXPECT_GE(m.cumulative_ratio(3), 0.999);
}

TEST(Pca, NoiseFreeRankOne) {
  SynthConfig cfg = small_synth(60);
  cfg.latent_rank = 1;
  cfg.noise_sigma = 0.0;
  const auto m = fit_pca(synthesize(cfg), 1.0, 1);
  EXPECT_NEAR(m.explained_ratio[0], 1.0, 1e-9);
  for (std::size_t i = 1; i < m.k(); ++i) EXPECT_NEAR(m.explained_ratio[i], 0.0, 1e-9);
}

TEST(Pca, SubsampleSeedsAgreeOnSpectrum) {
  // Independent per-pixel latent factors keep the sampling error of the
  // spectrum small.
  SynthConfig cfg = small_synth(400);
  cfg.height = cfg.width = 8;
  cfg.pixel_jitter = 3.0;
  const auto set = split(synthesize(cfg), {}, 1);
  const auto a = fit_pca(set, 0.4, 1);
  const auto b = fit_pca(set, 0.4, 2);
  const auto full = fit_pca(set, 1.0, 1);
  EXPECT_NE(a.components, b.components);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(a.eigenvalues[i], full.eigenvalues[i], 0.05 * full.eigenvalues[i]);
    EXPECT_NEAR(b.eigenvalues[i], full.eigenvalues[i], 0.05 * full.eigenvalues[i]);
  }
}

TEST(Pca, SpectrumMatchesPopulationCovariance) {
  // The population covariance of standardized pixels is D^-1/2 S D^-1/2 with S
  // known analytically; its top-3 share bounds what the fit should find.
  SynthConfig cfg = small_synth(300);
  const auto model = synth_model(cfg);
  const std::size_t B = cfg.bands, r = cfg.latent_rank;
  msml::Matrix pop(B, B);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) {
      double aat = 0;
      for (std::size_t k = 0; k < r; ++k) aat += model.mixing[i * r + k] * model.mixing[j * r + k];
      pop(i, j) = (1 + cfg.pixel_jitter * cfg.pixel_jitter) * aat + (i == j ? cfg.noise_sigma * cfg.noise_sigma : 0.0);
    }
  const auto lib = model.population_covariance(cfg);
  for (std::size_t i = 0; i < B * B; ++i) EXPECT_NEAR(lib[i], pop.values()[i], 1e-12);
  msml::Matrix corr(B, B);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) corr(i, j) = pop(i, j) / std::sqrt(pop(i, i) * pop(j, j));
  const auto e = eigendecompose_symmetric(corr);
  const double total = std::accumulate(e.values.begin(), e.values.end(), 0.0);
  const double top3 = (e.values[0] + e.values[1] + e.values[2]) / total;
  EXPECT_GE(top3, 0.999);
  const auto fit = fit_pca(synthesize(cfg), 1.0, 1);
  EXPECT_NEAR(fit.cumulative_ratio(3), top3, 2e-4);
}

TEST(Pca, SelectComponents) {
  PcaModel m;
  m.mean.assign(4, 0);
  m.stddev.assign(4, 1);
  m.components = msml::Matrix::identity(4);
  m.eigenvalues = {0.6, 0.3, 0.09, 0.01};
  m.explained_ratio = m.eigenvalues;
  m.total_variance = 1.0;
  EXPECT_EQ(select_components(m, VarianceThreshold{0.95}).k(), 3u);
  EXPECT_EQ(select_components(m, VarianceThreshold{1.0}).k(), 4u);
  EXPECT_EQ(select_components(m, FixedK{2}).k(), 2u);
  EXPECT_THROW(select_components(m, FixedK{0}), Error);
  EXPECT_THROW(select_components(m, FixedK{5}), Error);
  EXPECT_THROW(select_components(m, VarianceThreshold{0.0}), Error);
  const auto full = fit_pca(split(synthesize(small_synth(50)), {}, 1), 0.4, 1);
  const auto three = select_components(full, FixedK{3});
  EXPECT_EQ(three.components.rows(), 3u);
  EXPECT_EQ(three.components.cols(), 13u);
}

TEST(Pca, ProjectionProperties) {
  const auto set = synthesize(small_synth(100));
  const auto m = fit_pca(set, 1.0, 1);
  // A pixel equal to the mean maps to zero.
  msml::Matrix mu(1, 13);
  for (std::size_t b = 0; b < 13; ++b) mu(0, b) = m.mean[b];
  const auto zero = project_pixels(m, mu);
  for (double v : zero.values()) EXPECT_NEAR(v, 0.0, 1e-12);

  // Decorrelation at k = B over the fitted pixels.
  msml::Matrix all(set.size() * 16, 13);
  std::size_t r = 0;
  for (const auto& s : set.samples()) {
    const auto px = raster_pixels(s.raster);
    for (std::size_t i = 0; i < px.rows(); ++i, ++r)
      for (std::size_t b = 0; b < 13; ++b) all(r, b) = px(i, b);
  }
  const auto cov = oracle::covariance(project_pixels(m, all));
  double max_diag = 0;
  for (std::size_t i = 0; i < 13; ++i) max_diag = std::max(max_diag, cov(i, i));
  for (std::size_t i = 0; i < 13; ++i)
    for (std::size_t j = 0; j < 13; ++j)
      if (i != j) {
        EXPECT_LE(std::abs(cov(i, j)), 1e-8 * max_diag);
      }

  // Rank-3 reconstruction error tracks the discarded eigenvalues.
  const auto m3 = select_components(m, FixedK{3});
  const auto z = project_pixels(m3, all);
  double err = 0;
  for (std::size_t i = 0; i < all.rows(); ++i)
    for (std::size_t b = 0; b < 13; ++b) {
      double rec = 0;
      for (std::size_t k = 0; k < 3; ++k) rec += m3.components(k, b) * z(i, k);
      const double std_px = (all(i, b) - m.mean[b]) / m.stddev[b];
      err += (std_px - rec) * (std_px - rec);
    }
  err /= static_cast<double>(all.rows());
  const double residual = std::accumulate(m.eigenvalues.begin() + 3, m.eigenvalues.end(), 0.0);
  EXPECT_NEAR(err, residual, 1e-8 + 1e-6 * residual);

  const auto projected = project(m3, set);
  EXPECT_EQ(projected.shape().bands, 3u);
  EXPECT_EQ(projected.shape().height, 4u);
}

TEST(Pca, PersistenceRoundTrip) {
  const auto dir = oracle::temp_dir("pca_io");
  const auto m = select_components(fit_pca(synthesize(small_synth(30)), 0.4, 1), FixedK{3});
  save_pca(m, dir / "m.pca1");
  const auto back = load_pca(dir / "m.pca1");
  EXPECT_EQ(back.mean, m.mean);
  EXPECT_EQ(back.stddev, m.stddev);
  EXPECT_EQ(back.components, m.components);
  EXPECT_EQ(back.eigenvalues, m.eigenvalues);
  EXPECT_EQ(std::filesystem::file_size(dir / "m.pca1"), 12u + 8 * (13 + 13 + 3 + 39));
  auto bytes = encode_pca(m);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_pca(bytes), Error);
}

TEST(Pca, EmptyPoolRejected) {
  const SampleSet empty({13, 2, 2}, 9, {});
  EXPECT_THROW(fit_pca(empty, 0.4, 1), Error);
  EXPECT_THROW(fit_pca(synthesize(small_synth(5)), 0.0, 1), Error);
}
