#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "msml/dataformat.hpp"
#include "msml/eigen_sym.hpp"
#include "msml/tensor.hpp"

namespace msml {

/// Streaming per-band mean and population standard deviation (Welford).
class Standardizer {
 public:
  explicit Standardizer(std::size_t bands = 0);

  void add_pixel(std::span<const double> pixel);
  void merge(const Standardizer& other);

  std::size_t bands() const noexcept { return mean_.size(); }
  std::uint64_t count() const noexcept { return count_; }
  std::span<const double> mean() const noexcept { return mean_; }
  /// Population standard deviation; degenerate bands report 1. Throws
  /// EmptyBucket while fewer than two pixels have been seen.
  std::vector<double> stddev() const;
  std::vector<double> variance() const;
  std::vector<bool> degenerate() const;

  // Degenerate bands divide by 1.
  double standardize(std::size_t band, double value) const;

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Standardizer over every pixel of the samples tagged `split`. In strict
/// mode a zero-variance band raises DegenerateBand.
Standardizer fit_standardizer(const SampleSet& set, Split split, bool strict = false);
Standardizer fit_standardizer(const SampleSet& set, std::span<const std::size_t> indices, bool strict = false);

/// Running mean and co-moment matrix for B-dimensional observations. Only the
/// upper triangle is stored; reads mirror it.
class CovAccumulator {
 public:
  explicit CovAccumulator(std::size_t dim = 0);

  void add(std::span<const double> x);
  void merge(const CovAccumulator& other);

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return count_; }
  std::span<const double> mean() const noexcept { return mean_; }
  double comoment(std::size_t i, std::size_t j) const;

  /// Population covariance (divides by n). Throws EmptyBucket when empty.
  Matrix covariance() const;

 private:
  std::size_t index(std::size_t i, std::size_t j) const;

  std::size_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> upper_;
};

/// Adds every row of `pixels` (n x B). Throws DimensionMismatch.
CovAccumulator& accumulate(CovAccumulator& acc, const Matrix& pixels);

struct PcaModel {
  std::vector<double> mean;        // B
  std::vector<double> stddev;      // B, degenerate bands hold 1
  Matrix components;               // k x B, orthonormal rows
  std::vector<double> eigenvalues; // k, descending, >= 0
  std::vector<double> explained_ratio;  // k, relative to total_variance
  double total_variance = 0.0;     // sum over all B eigenvalues of the fit
  std::vector<std::uint32_t> degenerate_bands;

  std::size_t bands() const noexcept { return mean.size(); }
  std::size_t k() const noexcept { return components.rows(); }
  double cumulative_ratio(std::size_t top) const;
};

/// Indices (ascending) of the seeded subsample of `pool` used to fit PCA:
/// max(1, round(fraction * |pool|)) samples.
std::vector<std::size_t> pca_subsample(std::span<const std::size_t> pool, double fraction, std::uint64_t seed);

/// Pool of samples a PCA fit draws from: the train bucket, or every sample
/// when no sample carries a train tag.
std::vector<std::size_t> pca_pool(const SampleSet& set);

/// Standardizer over the pool, covariance of standardized pixels over the
/// seeded subsample, then the full eigendecomposition.
PcaModel fit_pca(const SampleSet& set, double subsample_fraction, std::uint64_t seed, bool strict = false);

struct FixedK {
  std::size_t k;
};
struct VarianceThreshold {
  double p;
};
using ComponentRule = std::variant<FixedK, VarianceThreshold>;

PcaModel select_components(const PcaModel& model, const ComponentRule& rule);

/// Pixels of the raster as rows (pixels x B), in double precision.
Matrix raster_pixels(const BandRaster& raster);
/// Standardizes and projects each row: z = W ((p - mu) / sigma).
Matrix project_pixels(const PcaModel& model, const Matrix& pixels);
/// Raster with k bands and the same spatial extent.
BandRaster project(const PcaModel& model, const BandRaster& raster);
SampleSet project(const PcaModel& model, const SampleSet& set);

// PCA1: "PCA1", u32 B, u32 k, then mu (B), sigma (B), lambda (k), W (k x B),
// all float64 little-endian.
std::vector<std::uint8_t> encode_pca(const PcaModel& model);
PcaModel decode_pca(std::span<const std::uint8_t> bytes);
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace msml
