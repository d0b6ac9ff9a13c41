#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace msml {

/// Raster of B bands, band-major: value(b, y, x) = values[(b * H + y) * W + x].
struct BandRaster {
  std::uint32_t bands = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;

  BandRaster() = default;
  BandRaster(std::uint32_t b, std::uint32_t h, std::uint32_t w)
      : bands(b), height(h), width(w), values(std::size_t{b} * h * w, 0.0f) {}

  std::size_t pixels() const noexcept { return std::size_t{height} * width; }
  float at(std::uint32_t band, std::size_t pixel) const { return values[band * pixels() + pixel]; }
  float& at(std::uint32_t band, std::size_t pixel) { return values[band * pixels() + pixel]; }

  friend bool operator==(const BandRaster&, const BandRaster&) = default;
};

/// Multi-hot label vector; every entry is 0 or 1.
using LabelVector = std::vector<std::uint8_t>;

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2, Unassigned = 3 };

const char* to_string(Split s) noexcept;

struct Sample {
  BandRaster raster;
  LabelVector labels;
  Split split = Split::Unassigned;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct RasterShape {
  std::uint32_t bands = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t pixels() const noexcept { return std::size_t{height} * width; }
  std::size_t values() const noexcept { return pixels() * bands; }
  friend bool operator==(const RasterShape&, const RasterShape&) = default;
};

/// Immutable collection of equally shaped samples. The constructor enforces
/// the shape, label and finiteness invariants.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(RasterShape shape, std::uint32_t classes, std::vector<Sample> samples,
            std::uint64_t split_seed = 0);

  const RasterShape& shape() const noexcept { return shape_; }
  std::uint32_t classes() const noexcept { return classes_; }
  std::uint64_t split_seed() const noexcept { return split_seed_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::span<const Sample> samples() const noexcept { return samples_; }

  /// Indices of samples tagged with `split`, in storage order.
  std::vector<std::size_t> bucket(Split split) const;
  /// Samples whose label vector has no positive entry.
  std::size_t count_empty_labels() const;

  /// Copy restricted to one bucket, tags preserved.
  SampleSet subset(Split split) const;
  SampleSet with_splits(std::span<const Split> tags, std::uint64_t seed) const;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  RasterShape shape_;
  std::uint32_t classes_ = 0;
  std::vector<Sample> samples_;
  std::uint64_t split_seed_ = 0;
};

// MSB1 container: "MSB1", u32 N, u32 B, u32 H, u32 W, u32 C, then per sample
// B*H*W float32 band-major followed by C label bytes. Little-endian, no padding.
std::vector<std::uint8_t> encode_sampleset(const SampleSet& set);
SampleSet decode_sampleset(std::span<const std::uint8_t> bytes);

SampleSet load_sampleset(const std::filesystem::path& path);
void save_sampleset(const SampleSet& set, const std::filesystem::path& path);

struct SynthConfig {
  std::uint32_t n_samples = 2000;
  std::uint32_t bands = 13;
  std::uint32_t height = 8;
  std::uint32_t width = 8;
  std::uint32_t classes = 9;
  std::uint32_t latent_rank = 3;
  double noise_sigma = 0.01;
  // Spread of per-pixel latent factors around the per-sample factors.
  double pixel_jitter = 0.2;
  std::uint64_t seed = 1;
};

/// Population quantities behind synthesize(): pixel = offset + A u + noise,
/// with u ~ N(u_sample, jitter^2 I), u_sample ~ N(0, I).
struct SynthModel {
  std::vector<double> offset;           // B
  std::vector<double> mixing;           // B x r, row-major
  std::vector<double> label_direction;  // C x r, unit rows
  std::vector<double> label_threshold;  // C

  /// (1 + jitter^2) A A^T + sigma^2 I, row-major B x B.
  std::vector<double> population_covariance(const SynthConfig& cfg) const;
};

SynthModel synth_model(const SynthConfig& cfg);
SampleSet synthesize(const SynthConfig& cfg);

struct SplitRatio {
  double train = 5.0;
  double val = 1.0;
  double test = 1.0;
};

/// Bucket sizes for n samples: largest-remainder rounding of the ratio,
/// ties resolved toward train, then val.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatio& ratio);

/// Seeded shuffle followed by contiguous assignment train | val | test.
SampleSet split(const SampleSet& set, const SplitRatio& ratio, std::uint64_t seed);

// MSB1 carries no split tags, so they travel in a text sidecar next to the
// dataset: "<path>.split" holding "seed=<n>" and one of T/V/S per sample.
std::filesystem::path split_sidecar_path(const std::filesystem::path& dataset);
void save_split_sidecar(const SampleSet& set, const std::filesystem::path& dataset);
/// Applies the sidecar tags when the sidecar exists; returns the set unchanged otherwise.
SampleSet apply_split_sidecar(const SampleSet& set, const std::filesystem::path& dataset);

}  // namespace msml
