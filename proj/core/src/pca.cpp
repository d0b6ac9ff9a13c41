#include "msml/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msml/binary_io.hpp"
#include "msml/error.hpp"

namespace msml {

namespace {

bool is_degenerate(double variance, double mean) {
  return !(variance > 1e-24 * std::max(1.0, mean * mean));
}

}  // namespace

Standardizer::Standardizer(std::size_t bands) : mean_(bands, 0.0), m2_(bands, 0.0) {}

void Standardizer::add_pixel(std::span<const double> pixel) {
  if (pixel.size() != mean_.size())
    throw Error(ErrorCode::DimensionMismatch, "pixel band count differs from standardizer");
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t b = 0; b < mean_.size(); ++b) {
    const double delta = pixel[b] - mean_[b];
    mean_[b] += delta / n;
    m2_[b] += delta * (pixel[b] - mean_[b]);
  }
}

void Standardizer::merge(const Standardizer& other) {
  if (other.bands() != bands()) throw Error(ErrorCode::DimensionMismatch, "standardizer band counts differ");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t b = 0; b < mean_.size(); ++b) {
    const double delta = other.mean_[b] - mean_[b];
    mean_[b] += delta * nb / n;
    m2_[b] += other.m2_[b] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

std::vector<double> Standardizer::variance() const {
  if (count_ < 2) throw Error(ErrorCode::EmptyBucket, "standardizer needs at least two pixels");
  std::vector<double> v(m2_.size());
  for (std::size_t b = 0; b < v.size(); ++b) v[b] = m2_[b] / static_cast<double>(count_);
  return v;
}

std::vector<double> Standardizer::stddev() const {
  auto v = variance();
  for (std::size_t b = 0; b < v.size(); ++b) v[b] = is_degenerate(v[b], mean_[b]) ? 1.0 : std::sqrt(v[b]);
  return v;
}

std::vector<bool> Standardizer::degenerate() const {
  const auto v = variance();
  std::vector<bool> d(v.size());
  for (std::size_t b = 0; b < v.size(); ++b) d[b] = is_degenerate(v[b], mean_[b]);
  return d;
}

double Standardizer::standardize(std::size_t band, double value) const {
  const double var = m2_[band] / static_cast<double>(count_);
  const double sd = is_degenerate(var, mean_[band]) ? 1.0 : std::sqrt(var);
  return (value - mean_[band]) / sd;
}

Standardizer fit_standardizer(const SampleSet& set, std::span<const std::size_t> indices, bool strict) {
  if (indices.empty()) throw Error(ErrorCode::EmptyBucket, "no samples to fit the standardizer on");
  const auto& shape = set.shape();
  Standardizer st(shape.bands);
  std::vector<double> px(shape.bands);
  for (std::size_t i : indices) {
    const auto& r = set[i].raster;
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
      for (std::uint32_t b = 0; b < shape.bands; ++b) px[b] = r.at(b, p);
      st.add_pixel(px);
    }
  }
  if (st.count() < 2) throw Error(ErrorCode::EmptyBucket, "standardizer needs at least two pixels");
  if (strict) {
    const auto deg = st.degenerate();
    for (std::size_t b = 0; b < deg.size(); ++b)
      if (deg[b]) throw Error(ErrorCode::DegenerateBand, "band " + std::to_string(b) + " has zero variance");
  }
  return st;
}

Standardizer fit_standardizer(const SampleSet& set, Split split, bool strict) {
  const auto idx = set.bucket(split);
  if (idx.empty())
    throw Error(ErrorCode::EmptyBucket, std::string("bucket '") + to_string(split) + "' is empty");
  return fit_standardizer(set, idx, strict);
}

CovAccumulator::CovAccumulator(std::size_t dim)
    : dim_(dim), mean_(dim, 0.0), upper_(dim * (dim + 1) / 2, 0.0) {}

std::size_t CovAccumulator::index(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  // Row-major packed upper triangle.
  return i * dim_ - (i * (i - 1)) / 2 + (j - i);
}

double CovAccumulator::comoment(std::size_t i, std::size_t j) const { return upper_[index(i, j)]; }

void CovAccumulator::add(std::span<const double> x) {
  if (x.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "observation dimension differs from accumulator");
  ++count_;
  const double n = static_cast<double>(count_);
  thread_local std::vector<double> delta;
  delta.resize(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    delta[i] = x[i] - mean_[i];
    mean_[i] += delta[i] / n;
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = i; j < dim_; ++j, ++k) upper_[k] += delta[i] * (x[j] - mean_[j]);
}

void CovAccumulator::merge(const CovAccumulator& other) {
  if (other.dim_ != dim_) throw Error(ErrorCode::DimensionMismatch, "accumulator dimensions differ");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  std::vector<double> delta(dim_);
  for (std::size_t i = 0; i < dim_; ++i) delta[i] = other.mean_[i] - mean_[i];
  std::size_t k = 0;
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = i; j < dim_; ++j, ++k) upper_[k] += other.upper_[k] + delta[i] * delta[j] * na * nb / n;
  for (std::size_t i = 0; i < dim_; ++i) mean_[i] += delta[i] * nb / n;
  count_ += other.count_;
}

Matrix CovAccumulator::covariance() const {
  if (count_ == 0) throw Error(ErrorCode::EmptyBucket, "covariance of an empty accumulator");
  Matrix c(dim_, dim_);
  const double n = static_cast<double>(count_);
  std::size_t k = 0;
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = i; j < dim_; ++j, ++k) c(i, j) = c(j, i) = upper_[k] / n;
  return c;
}

CovAccumulator& accumulate(CovAccumulator& acc, const Matrix& pixels) {
  if (pixels.rows() > 0 && pixels.cols() != acc.dim())
    throw Error(ErrorCode::DimensionMismatch, "pixel batch dimension differs from accumulator");
  for (std::size_t r = 0; r < pixels.rows(); ++r) acc.add(pixels.row(r));
  return acc;
}

double PcaModel::cumulative_ratio(std::size_t top) const {
  top = std::min(top, explained_ratio.size());
  return std::accumulate(explained_ratio.begin(), explained_ratio.begin() + static_cast<std::ptrdiff_t>(top), 0.0);
}

std::vector<std::size_t> pca_subsample(std::span<const std::size_t> pool, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "subsample fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(pool.begin(), pool.end());
  const auto take = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size()))), 1, idx.size());
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> pca_pool(const SampleSet& set) {
  auto pool = set.bucket(Split::Train);
  if (pool.empty() && set.bucket(Split::Val).empty() && set.bucket(Split::Test).empty()) {
    pool.resize(set.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  return pool;
}

PcaModel fit_pca(const SampleSet& set, double subsample_fraction, std::uint64_t seed, bool strict) {
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "subsample fraction must lie in (0, 1]");
  const auto pool = pca_pool(set);
  if (pool.empty()) throw Error(ErrorCode::EmptyBucket, "no training samples to fit PCA on");

  const Standardizer st = fit_standardizer(set, pool, strict);
  const auto sub = pca_subsample(pool, subsample_fraction, seed);

  const auto& shape = set.shape();
  CovAccumulator acc(shape.bands);
  std::vector<double> z(shape.bands);
  for (std::size_t i : sub) {
    const auto& r = set[i].raster;
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
      for (std::uint32_t b = 0; b < shape.bands; ++b) z[b] = st.standardize(b, r.at(b, p));
      acc.add(z);
    }
  }
  const auto eig = eigendecompose_symmetric(acc.covariance());

  PcaModel m;
  m.mean.assign(st.mean().begin(), st.mean().end());
  m.stddev = st.stddev();
  const auto deg = st.degenerate();
  for (std::size_t b = 0; b < deg.size(); ++b)
    if (deg[b]) m.degenerate_bands.push_back(static_cast<std::uint32_t>(b));
  m.components = eig.vectors;
  m.eigenvalues = eig.values;
  for (double& l : m.eigenvalues) l = std::max(l, 0.0);
  m.total_variance = std::accumulate(m.eigenvalues.begin(), m.eigenvalues.end(), 0.0);
  m.explained_ratio.resize(m.eigenvalues.size());
  for (std::size_t i = 0; i < m.eigenvalues.size(); ++i)
    m.explained_ratio[i] = m.total_variance > 0.0 ? m.eigenvalues[i] / m.total_variance : 0.0;
  return m;
}

PcaModel select_components(const PcaModel& model, const ComponentRule& rule) {
  const std::size_t available = model.k();
  std::size_t keep = 0;
  if (const auto* fixed = std::get_if<FixedK>(&rule)) {
    if (fixed->k < 1 || fixed->k > available)
      throw Error(ErrorCode::InvalidRule, "FixedK must lie in [1, " + std::to_string(available) + "]");
    keep = fixed->k;
  } else {
    const double p = std::get<VarianceThreshold>(rule).p;
    if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidRule, "VarianceThreshold must lie in (0, 1]");
    if (p == 1.0) {
      keep = available;
    } else {
      double cum = 0.0;
      keep = available;
      for (std::size_t i = 0; i < available; ++i) {
        cum += model.explained_ratio[i];
        if (cum >= p - 1e-12) {
          keep = i + 1;
          break;
        }
      }
    }
  }

  PcaModel out = model;
  out.components = Matrix(keep, model.bands());
  for (std::size_t r = 0; r < keep; ++r)
    for (std::size_t c = 0; c < model.bands(); ++c) out.components(r, c) = model.components(r, c);
  out.eigenvalues.resize(keep);
  out.explained_ratio.resize(keep);
  return out;
}

Matrix raster_pixels(const BandRaster& raster) {
  Matrix px(raster.pixels(), raster.bands);
  for (std::uint32_t b = 0; b < raster.bands; ++b)
    for (std::size_t p = 0; p < raster.pixels(); ++p) px(p, b) = raster.at(b, p);
  return px;
}

Matrix project_pixels(const PcaModel& model, const Matrix& pixels) {
  if (pixels.cols() != model.bands())
    throw Error(ErrorCode::DimensionMismatch, "pixel band count differs from the PCA model");
  Matrix z = pixels;
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t b = 0; b < z.cols(); ++b) z(r, b) = (z(r, b) - model.mean[b]) / model.stddev[b];
  return matmul_abt(z, model.components);
}

BandRaster project(const PcaModel& model, const BandRaster& raster) {
  if (raster.bands != model.bands())
    throw Error(ErrorCode::DimensionMismatch, "raster band count differs from the PCA model");
  const Matrix out = project_pixels(model, raster_pixels(raster));
  BandRaster r(static_cast<std::uint32_t>(model.k()), raster.height, raster.width);
  for (std::size_t p = 0; p < out.rows(); ++p)
    for (std::size_t c = 0; c < out.cols(); ++c) r.at(static_cast<std::uint32_t>(c), p) = static_cast<float>(out(p, c));
  return r;
}

SampleSet project(const PcaModel& model, const SampleSet& set) {
  std::vector<Sample> out;
  out.reserve(set.size());
  for (const auto& s : set.samples()) out.push_back(Sample{project(model, s.raster), s.labels, s.split});
  RasterShape shape = set.shape();
  shape.bands = static_cast<std::uint32_t>(model.k());
  return SampleSet(shape, set.classes(), std::move(out), set.split_seed());
}

std::vector<std::uint8_t> encode_pca(const PcaModel& model) {
  io::ByteWriter w;
  w.magic("PCA1");
  w.u32(static_cast<std::uint32_t>(model.bands()));
  w.u32(static_cast<std::uint32_t>(model.k()));
  w.f64s(model.mean);
  w.f64s(model.stddev);
  w.f64s(model.eigenvalues);
  w.f64s(model.components.values());
  return std::move(w).take();
}

PcaModel decode_pca(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("PCA1");
  const std::uint32_t b = r.u32();
  const std::uint32_t k = r.u32();
  if (b == 0 || k == 0 || k > b) throw Error(ErrorCode::InconsistentShape, "PCA1 header has invalid B/k");
  if (r.remaining() != (2 * std::size_t{b} + k + std::size_t{k} * b) * 8)
    throw Error(ErrorCode::TruncatedFile, "PCA1 payload size does not match header");
  PcaModel m;
  m.mean.resize(b);
  m.stddev.resize(b);
  m.eigenvalues.resize(k);
  m.components = Matrix(k, b);
  r.f64s(m.mean);
  r.f64s(m.stddev);
  r.f64s(m.eigenvalues);
  r.f64s(m.components.values());
  // Only the retained spectrum is persisted, so ratios are relative to it.
  m.total_variance = std::accumulate(m.eigenvalues.begin(), m.eigenvalues.end(), 0.0);
  m.explained_ratio.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    m.explained_ratio[i] = m.total_variance > 0.0 ? m.eigenvalues[i] / m.total_variance : 0.0;
  return m;
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) { io::write_file(path, encode_pca(model)); }

PcaModel load_pca(const std::filesystem::path& path) { return decode_pca(io::read_file(path)); }

}  // namespace msml
