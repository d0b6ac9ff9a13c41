#include "msml/dataformat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "msml/binary_io.hpp"
#include "msml/error.hpp"

namespace msml {

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

SampleSet::SampleSet(RasterShape shape, std::uint32_t classes, std::vector<Sample> samples,
                     std::uint64_t split_seed)
    : shape_(shape), classes_(classes), samples_(std::move(samples)), split_seed_(split_seed) {
  if (shape_.bands == 0 || shape_.height == 0 || shape_.width == 0)
    throw Error(ErrorCode::InconsistentShape, "raster dimensions must be positive");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    const auto& r = s.raster;
    if (r.bands != shape_.bands || r.height != shape_.height || r.width != shape_.width ||
        r.values.size() != shape_.values())
      throw Error(ErrorCode::InconsistentShape, "sample " + std::to_string(i) + " has a different raster shape");
    if (s.labels.size() != classes_)
      throw Error(ErrorCode::InconsistentShape, "sample " + std::to_string(i) + " has a different class count");
    for (auto bit : s.labels)
      if (bit > 1)
        throw Error(ErrorCode::InconsistentShape, "sample " + std::to_string(i) + " has a label byte other than 0/1");
    for (std::size_t v = 0; v < r.values.size(); ++v)
      if (!std::isfinite(r.values[v]))
        throw Error(ErrorCode::NonFiniteValue,
                    "sample " + std::to_string(i) + ", band " + std::to_string(v / shape_.pixels()));
  }
}

std::vector<std::size_t> SampleSet::bucket(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (samples_[i].split == split) idx.push_back(i);
  return idx;
}

std::size_t SampleSet::count_empty_labels() const {
  return static_cast<std::size_t>(std::count_if(samples_.begin(), samples_.end(), [](const Sample& s) {
    return std::none_of(s.labels.begin(), s.labels.end(), [](auto b) { return b != 0; });
  }));
}

SampleSet SampleSet::subset(Split split) const {
  std::vector<Sample> out;
  for (const auto& s : samples_)
    if (s.split == split) out.push_back(s);
  return SampleSet(shape_, classes_, std::move(out), split_seed_);
}

SampleSet SampleSet::with_splits(std::span<const Split> tags, std::uint64_t seed) const {
  if (tags.size() != samples_.size())
    throw Error(ErrorCode::InconsistentShape, "split tag count does not match sample count");
  SampleSet copy = *this;
  for (std::size_t i = 0; i < tags.size(); ++i) copy.samples_[i].split = tags[i];
  copy.split_seed_ = seed;
  return copy;
}

std::vector<std::uint8_t> encode_sampleset(const SampleSet& set) {
  io::ByteWriter w;
  w.magic("MSB1");
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(set.shape().bands);
  w.u32(set.shape().height);
  w.u32(set.shape().width);
  w.u32(set.classes());
  for (const auto& s : set.samples()) {
    for (float v : s.raster.values) w.f32(v);
    for (auto b : s.labels) w.u8(b);
  }
  return std::move(w).take();
}

SampleSet decode_sampleset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("MSB1");
  const std::uint32_t n = r.u32();
  RasterShape shape;
  shape.bands = r.u32();
  shape.height = r.u32();
  shape.width = r.u32();
  const std::uint32_t classes = r.u32();
  if (shape.bands == 0 || shape.height == 0 || shape.width == 0)
    throw Error(ErrorCode::InconsistentShape, "header has a zero raster dimension");

  const std::size_t per_sample = shape.values() * 4 + classes;
  if (n != 0 && r.remaining() / n < per_sample)
    throw Error(ErrorCode::TruncatedFile, "payload shorter than header declares");
  if (r.remaining() != std::size_t{n} * per_sample)
    throw Error(ErrorCode::InconsistentShape, "trailing bytes after the last sample");

  std::vector<Sample> samples(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& s = samples[i];
    s.raster = BandRaster(shape.bands, shape.height, shape.width);
    for (auto& v : s.raster.values) {
      v = r.f32();
      if (!std::isfinite(v)) {
        const std::size_t off = static_cast<std::size_t>(&v - s.raster.values.data());
        throw Error(ErrorCode::NonFiniteValue,
                    "sample " + std::to_string(i) + ", band " + std::to_string(off / shape.pixels()));
      }
    }
    s.labels.resize(classes);
    for (auto& b : s.labels) b = r.u8();
  }
  return SampleSet(shape, classes, std::move(samples));
}

SampleSet load_sampleset(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_sampleset(bytes);
}

void save_sampleset(const SampleSet& set, const std::filesystem::path& path) {
  io::write_file(path, encode_sampleset(set));
}

std::vector<double> SynthModel::population_covariance(const SynthConfig& cfg) const {
  const std::size_t b = cfg.bands;
  const std::size_t r = cfg.latent_rank;
  const double latent_var = 1.0 + cfg.pixel_jitter * cfg.pixel_jitter;
  std::vector<double> cov(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += mixing[i * r + k] * mixing[j * r + k];
      cov[i * b + j] = latent_var * s + (i == j ? cfg.noise_sigma * cfg.noise_sigma : 0.0);
    }
  return cov;
}

namespace {

void validate(const SynthConfig& cfg) {
  if (cfg.bands == 0 || cfg.height == 0 || cfg.width == 0 || cfg.classes == 0)
    throw Error(ErrorCode::InvalidConfig, "bands, height, width and classes must be positive");
  if (cfg.latent_rank == 0 || cfg.latent_rank > cfg.bands)
    throw Error(ErrorCode::InvalidConfig, "latent_rank must be in [1, bands]");
  if (!(cfg.noise_sigma >= 0.0) || !(cfg.pixel_jitter >= 0.0))
    throw Error(ErrorCode::InvalidConfig, "noise_sigma and pixel_jitter must be non-negative");
}

}  // namespace

SynthModel synth_model(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(1.0, 3.0);

  SynthModel m;
  const std::size_t r = cfg.latent_rank;
  m.offset.resize(cfg.bands);
  for (auto& o : m.offset) o = uniform(rng);
  m.mixing.resize(std::size_t{cfg.bands} * r);
  for (auto& a : m.mixing) a = 0.5 * normal(rng);

  m.label_direction.resize(std::size_t{cfg.classes} * r);
  m.label_threshold.resize(cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      const double v = normal(rng);
      m.label_direction[c * r + k] = v;
      n2 += v * v;
    }
    const double n = std::sqrt(n2);
    for (std::size_t k = 0; k < r; ++k) m.label_direction[c * r + k] /= n;
    // Thresholds in [-0.6, 0.6] give class frequencies between ~27% and ~73%.
    m.label_threshold[c] = 1.2 * (std::uniform_real_distribution<double>(0.0, 1.0)(rng) - 0.5);
  }
  return m;
}

SampleSet synthesize(const SynthConfig& cfg) {
  const SynthModel m = synth_model(cfg);
  // Separate stream so the model parameters do not depend on n_samples.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t r = cfg.latent_rank;
  const std::size_t pixels = std::size_t{cfg.height} * cfg.width;
  std::vector<Sample> samples(cfg.n_samples);
  std::vector<double> u_sample(r), u_pixel(r);

  for (auto& s : samples) {
    for (auto& u : u_sample) u = normal(rng);
    s.raster = BandRaster(cfg.bands, cfg.height, cfg.width);
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t k = 0; k < r; ++k) u_pixel[k] = u_sample[k] + cfg.pixel_jitter * normal(rng);
      for (std::uint32_t b = 0; b < cfg.bands; ++b) {
        double v = m.offset[b];
        for (std::size_t k = 0; k < r; ++k) v += m.mixing[b * r + k] * u_pixel[k];
        if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * normal(rng);
        s.raster.at(b, p) = static_cast<float>(v);
      }
    }
    s.labels.resize(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      double proj = 0.0;
      for (std::size_t k = 0; k < r; ++k) proj += m.label_direction[c * r + k] * u_sample[k];
      s.labels[c] = proj > m.label_threshold[c] ? 1 : 0;
    }
  }
  return SampleSet(RasterShape{cfg.bands, cfg.height, cfg.width}, cfg.classes, std::move(samples));
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatio& ratio) {
  const std::array<double, 3> parts{ratio.train, ratio.val, ratio.test};
  for (double p : parts)
    if (!(p > 0.0) || !std::isfinite(p))
      throw Error(ErrorCode::InvalidConfig, "split ratio components must be positive");
  const double total = parts[0] + parts[1] + parts[2];

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * parts[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

SampleSet split(const SampleSet& set, const SplitRatio& ratio, std::uint64_t seed) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "cannot split an empty sample set");
  const auto counts = split_counts(set.size(), ratio);

  std::vector<std::size_t> perm(set.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Split> tags(set.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    Split t = Split::Train;
    if (k >= counts[0]) t = Split::Val;
    if (k >= counts[0] + counts[1]) t = Split::Test;
    tags[perm[k]] = t;
  }
  return set.with_splits(tags, seed);
}

std::filesystem::path split_sidecar_path(const std::filesystem::path& dataset) {
  auto p = dataset;
  p += ".split";
  return p;
}

void save_split_sidecar(const SampleSet& set, const std::filesystem::path& dataset) {
  std::string tags;
  tags.reserve(set.size());
  for (const auto& s : set.samples()) {
    switch (s.split) {
      case Split::Train: tags.push_back('T'); break;
      case Split::Val: tags.push_back('V'); break;
      case Split::Test: tags.push_back('S'); break;
      case Split::Unassigned: tags.push_back('-'); break;
    }
  }
  std::ofstream out(split_sidecar_path(dataset), std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write split sidecar for " + dataset.string());
  out << "seed=" << set.split_seed() << "\n" << tags << "\n";
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for split sidecar");
}

SampleSet apply_split_sidecar(const SampleSet& set, const std::filesystem::path& dataset) {
  std::ifstream in(split_sidecar_path(dataset));
  if (!in) return set;
  std::string seed_line, tags;
  std::getline(in, seed_line);
  std::getline(in, tags);
  if (seed_line.rfind("seed=", 0) != 0)
    throw Error(ErrorCode::InconsistentShape, "malformed split sidecar");
  const std::uint64_t seed = std::stoull(seed_line.substr(5));
  if (tags.size() != set.size())
    throw Error(ErrorCode::InconsistentShape, "split sidecar sample count does not match dataset");
  std::vector<Split> out(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case 'T': out[i] = Split::Train; break;
      case 'V': out[i] = Split::Val; break;
      case 'S': out[i] = Split::Test; break;
      case '-': out[i] = Split::Unassigned; break;
      default: throw Error(ErrorCode::InconsistentShape, "unknown split tag in sidecar");
    }
  }
  return set.with_splits(out, seed);
}

}  // namespace msml
