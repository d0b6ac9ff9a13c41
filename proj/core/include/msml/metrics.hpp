#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msml/tensor.hpp"

namespace msml {

struct ConfusionCounts {
  std::uint64_t samples = 0;
  std::vector<std::uint64_t> tp, fp, tn, fn;

  std::size_t classes() const noexcept { return tp.size(); }
};

/// prediction = probability >= threshold, counted per class.
ConfusionCounts confusion(const Matrix& probabilities, const Matrix& labels, double threshold = 0.5);

struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct MetricsReport {
  double threshold = 0.5;
  std::vector<ClassMetrics> per_class;
  // Label-wise (Hamming) accuracy over the whole N x C grid.
  double accuracy = 0.0;
  // Unweighted means over classes where the metric is defined; empty when
  // no class defines it.
  std::optional<double> macro_precision;
  std::optional<double> macro_recall;
  std::optional<double> macro_f1;
  std::optional<double> micro_precision;
  std::optional<double> micro_recall;
  std::optional<double> micro_f1;
  std::size_t undefined_entries = 0;
};

MetricsReport report(const ConfusionCounts& counts, double threshold = 0.5);

/// One "key=value" per line, values with four decimals, "undefined" where a
/// metric has a zero denominator.
std::string metrics_to_text(const MetricsReport& r);
std::string metrics_to_json(const MetricsReport& r);
void write_metrics(const MetricsReport& r, const std::filesystem::path& text_path, const std::filesystem::path& json_path);

}  // namespace msml
