#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msml/dataformat.hpp"
#include "msml/net.hpp"
#include "msml/pca.hpp"

namespace msml {

struct SizeComparison {
  std::size_t params_with_pca = 0;
  std::size_t params_without_pca = 0;
  std::size_t bytes_with_pca = 0;
  std::size_t bytes_without_pca = 0;
  // Degenerate comparison: both nets read the same channel count.
  bool identical = false;
  bool with_pca_smaller = false;
};

struct BenchReport {
  std::size_t batch_size = 64;
  std::size_t repeats = 5;
  std::size_t sample_count = 2510;
  std::size_t timed_batches = 0;
  bool pca_in_timed_region = false;
  int threads = 1;
  double min_ms = 0.0;
  double avg_ms = 0.0;
  double max_ms = 0.0;
  std::vector<double> batch_ms;
  SizeComparison sizes;
};

/// Times (optional PCA projection +) eval-mode forward per batch. One
/// untimed warm-up batch runs first; every repeat then times all
/// ceil(N / batch_size) batches. When `pca` is given but `include_pca` is
/// false, rasters are projected before timing starts.
BenchReport measure_inference(const Network& net, const SampleSet& set, std::size_t batch_size, std::size_t repeats,
                              bool include_pca, const PcaModel* pca);

/// Parameter and byte counts of two nets that differ only in input channels.
/// Throws IncomparableArchitectures otherwise.
SizeComparison compare_sizes(const Network& net_with_pca, const Network& net_without_pca);

/// Table-style rows: min/avg/max per variant, then parameter and size rows.
std::string bench_to_text(const std::vector<std::pair<std::string, BenchReport>>& runs, const SizeComparison& sizes);
std::string bench_to_json(const std::vector<std::pair<std::string, BenchReport>>& runs, const SizeComparison& sizes);

}  // namespace msml
