#include "msml/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "msml/error.hpp"
#include "msml/features.hpp"

namespace msml {

BenchReport measure_inference(const Network& net, const SampleSet& set, std::size_t batch_size, std::size_t repeats,
                              bool include_pca, const PcaModel* pca) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "cannot benchmark on an empty set");
  if (batch_size == 0 || repeats == 0) throw Error(ErrorCode::InvalidConfig, "batch size and repeats must be positive");
  if (include_pca && !pca) throw Error(ErrorCode::InvalidConfig, "timing PCA needs a PCA model");

  const std::size_t n = set.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> index(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t e = std::min(n, (b + 1) * batch_size);
    index[b].resize(e - b * batch_size);
    std::iota(index[b].begin(), index[b].end(), b * batch_size);
  }
  // Inputs prepared outside the timed region when projection is not timed.
  std::vector<Matrix> prepared;
  if (!include_pca) {
    prepared.reserve(batches);
    for (const auto& idx : index) prepared.push_back(sample_inputs(set, idx, pca));
  }
  auto run_batch = [&](std::size_t b) {
    const Matrix x = include_pca ? sample_inputs(set, index[b], pca) : prepared[b];
    return forward(net, x, Mode::Eval).output;
  };

  volatile double sink = run_batch(0)(0, 0);  // warm-up

  BenchReport r;
  r.batch_size = batch_size;
  r.repeats = repeats;
  r.sample_count = n;
  r.pca_in_timed_region = include_pca;
  r.threads = num_threads();
  r.batch_ms.reserve(batches * repeats);
  for (std::size_t rep = 0; rep < repeats; ++rep)
    for (std::size_t b = 0; b < batches; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      const Matrix out = run_batch(b);
      const auto t1 = std::chrono::steady_clock::now();
      sink = sink + out(0, 0);
      r.batch_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  (void)sink;
  r.timed_batches = r.batch_ms.size();
  const auto [mn, mx] = std::minmax_element(r.batch_ms.begin(), r.batch_ms.end());
  r.min_ms = *mn;
  r.max_ms = *mx;
  r.avg_ms = std::accumulate(r.batch_ms.begin(), r.batch_ms.end(), 0.0) / static_cast<double>(r.timed_batches);
  // Summation rounding could place the mean a hair outside [min, max].
  r.avg_ms = std::clamp(r.avg_ms, r.min_ms, r.max_ms);
  return r;
}

SizeComparison compare_sizes(const Network& with_pca, const Network& without_pca) {
  const auto& a = with_pca.layers;
  const auto& b = without_pca.layers;
  if (a.size() != b.size() || a.empty() || with_pca.pixels != without_pca.pixels)
    throw Error(ErrorCode::IncomparableArchitectures, "networks differ in depth or pixel count");
  for (std::size_t l = 0; l < a.size(); ++l) {
    const bool same_out = a[l].out() == b[l].out() && a[l].kind == b[l].kind;
    const bool same_in = l == 0 || a[l].in() == b[l].in();
    if (!same_out || !same_in)
      throw Error(ErrorCode::IncomparableArchitectures, "layer " + std::to_string(l) + " differs beyond the input width");
  }
  SizeComparison s;
  s.params_with_pca = count_params(with_pca);
  s.params_without_pca = count_params(without_pca);
  s.bytes_with_pca = model_size_bytes(with_pca);
  s.bytes_without_pca = model_size_bytes(without_pca);
  s.identical = with_pca.in_channels == without_pca.in_channels;
  s.with_pca_smaller = s.params_with_pca < s.params_without_pca && s.bytes_with_pca < s.bytes_without_pca;
  return s;
}

namespace {

std::string ms(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fms", v);
  return buf;
}

}  // namespace

std::string bench_to_text(const std::vector<std::pair<std::string, BenchReport>>& runs, const SizeComparison& sizes) {
  std::ostringstream os;
  os << "# inference time per batch\n";
  os << "variant\tbatch\trepeats\tsamples\ttimed_batches\tthreads\tmin\tavg\tmax\n";
  for (const auto& [name, r] : runs)
    os << name << "\t" << r.batch_size << "\t" << r.repeats << "\t" << r.sample_count << "\t" << r.timed_batches << "\t"
       << r.threads << "\t" << ms(r.min_ms) << "\t" << ms(r.avg_ms) << "\t" << ms(r.max_ms) << "\n";
  os << "# size\n";
  os << "row\twith_pca\twithout_pca\n";
  os << "parameters\t" << sizes.params_with_pca << "\t" << sizes.params_without_pca << "\n";
  os << "model_bytes\t" << sizes.bytes_with_pca << "\t" << sizes.bytes_without_pca << "\n";
  if (sizes.identical) os << "# note: both networks read the same channel count\n";
  return os.str();
}

std::string bench_to_json(const std::vector<std::pair<std::string, BenchReport>>& runs, const SizeComparison& sizes) {
  nlohmann::json j;
  j["schema"] = "msml.bench.v1";
  auto& arr = j["runs"] = nlohmann::json::array();
  for (const auto& [name, r] : runs)
    arr.push_back({{"variant", name},
                   {"batch_size", r.batch_size},
                   {"repeats", r.repeats},
                   {"sample_count", r.sample_count},
                   {"timed_batches", r.timed_batches},
                   {"pca_in_timed_region", r.pca_in_timed_region},
                   {"threads", r.threads},
                   {"min_ms", r.min_ms},
                   {"avg_ms", r.avg_ms},
                   {"max_ms", r.max_ms}});
  j["sizes"] = {{"params_with_pca", sizes.params_with_pca},
                {"params_without_pca", sizes.params_without_pca},
                {"bytes_with_pca", sizes.bytes_with_pca},
                {"bytes_without_pca", sizes.bytes_without_pca},
                {"identical", sizes.identical},
                {"with_pca_smaller", sizes.with_pca_smaller}};
  return j.dump(2);
}

}  // namespace msml
