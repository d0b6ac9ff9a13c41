#include "msml/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "msml/error.hpp"

namespace msml {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> harmonic(std::optional<double> p, std::optional<double> r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

std::optional<double> mean_defined(const std::vector<ClassMetrics>& cls, std::optional<double> ClassMetrics::*field) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& c : cls)
    if (const auto& v = c.*field) {
      s += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::string fmt4(std::optional<double> v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

ConfusionCounts confusion(const Matrix& probabilities, const Matrix& labels, double threshold) {
  if (probabilities.rows() != labels.rows() || probabilities.cols() != labels.cols())
    throw Error(ErrorCode::ShapeMismatch, "probabilities and labels differ in shape");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0, 1)");
  const std::size_t c = labels.cols();
  ConfusionCounts k;
  k.samples = labels.rows();
  k.tp.assign(c, 0);
  k.fp.assign(c, 0);
  k.tn.assign(c, 0);
  k.fn.assign(c, 0);
  for (std::size_t i = 0; i < labels.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probabilities(i, j);
      const double y = labels(i, j);
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::NumericalFailure, "probability outside [0, 1]");
      if (y != 0.0 && y != 1.0) throw Error(ErrorCode::InconsistentShape, "label entry other than 0/1");
      const bool pred = p >= threshold;
      const bool truth = y == 1.0;
      if (pred && truth) ++k.tp[j];
      else if (pred) ++k.fp[j];
      else if (truth) ++k.fn[j];
      else ++k.tn[j];
    }
  return k;
}

MetricsReport report(const ConfusionCounts& counts, double threshold) {
  MetricsReport r;
  r.threshold = threshold;
  std::uint64_t correct = 0, total = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t j = 0; j < counts.classes(); ++j) {
    ClassMetrics m;
    m.precision = ratio(counts.tp[j], counts.tp[j] + counts.fp[j]);
    m.recall = ratio(counts.tp[j], counts.tp[j] + counts.fn[j]);
    m.f1 = harmonic(m.precision, m.recall);
    r.undefined_entries += !m.precision + !m.recall + !m.f1;
    r.per_class.push_back(m);
    correct += counts.tp[j] + counts.tn[j];
    total += counts.tp[j] + counts.tn[j] + counts.fp[j] + counts.fn[j];
    tp += counts.tp[j];
    fp += counts.fp[j];
    fn += counts.fn[j];
  }
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  r.macro_precision = mean_defined(r.per_class, &ClassMetrics::precision);
  r.macro_recall = mean_defined(r.per_class, &ClassMetrics::recall);
  r.macro_f1 = mean_defined(r.per_class, &ClassMetrics::f1);
  r.micro_precision = ratio(tp, tp + fp);
  r.micro_recall = ratio(tp, tp + fn);
  r.micro_f1 = harmonic(r.micro_precision, r.micro_recall);
  return r;
}

std::string metrics_to_text(const MetricsReport& r) {
  std::ostringstream os;
  os << "threshold=" << fmt4(r.threshold) << "\n";
  os << "accuracy=" << fmt4(r.accuracy) << "\n";
  os << "macro_precision=" << fmt4(r.macro_precision) << "\n";
  os << "macro_recall=" << fmt4(r.macro_recall) << "\n";
  os << "macro_f1=" << fmt4(r.macro_f1) << "\n";
  os << "micro_precision=" << fmt4(r.micro_precision) << "\n";
  os << "micro_recall=" << fmt4(r.micro_recall) << "\n";
  os << "micro_f1=" << fmt4(r.micro_f1) << "\n";
  os << "undefined_entries=" << r.undefined_entries << "\n";
  os << "undefined_policy=excluded_from_macro\n";
  for (std::size_t j = 0; j < r.per_class.size(); ++j) {
    os << "class" << j << "_precision=" << fmt4(r.per_class[j].precision) << "\n";
    os << "class" << j << "_recall=" << fmt4(r.per_class[j].recall) << "\n";
    os << "class" << j << "_f1=" << fmt4(r.per_class[j].f1) << "\n";
  }
  return os.str();
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["schema"] = "msml.metrics.v1";
  j["threshold"] = r.threshold;
  j["accuracy"] = r.accuracy;
  j["macro"] = {{"precision", opt_json(r.macro_precision)},
                {"recall", opt_json(r.macro_recall)},
                {"f1", opt_json(r.macro_f1)}};
  j["micro"] = {{"precision", opt_json(r.micro_precision)},
                {"recall", opt_json(r.micro_recall)},
                {"f1", opt_json(r.micro_f1)}};
  j["undefined_entries"] = r.undefined_entries;
  j["undefined_policy"] = "excluded_from_macro";
  auto& cls = j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class)
    cls.push_back({{"precision", opt_json(c.precision)}, {"recall", opt_json(c.recall)}, {"f1", opt_json(c.f1)}});
  return j.dump(2);
}

void write_metrics(const MetricsReport& r, const std::filesystem::path& text_path, const std::filesystem::path& json_path) {
  std::ofstream t(text_path, std::ios::trunc);
  std::ofstream js(json_path, std::ios::trunc);
  if (!t || !js) throw Error(ErrorCode::IoFailure, "cannot write metrics report");
  t << metrics_to_text(r);
  js << metrics_to_json(r) << "\n";
  if (!t || !js) throw Error(ErrorCode::IoFailure, "write failed for metrics report");
}

}  // namespace msml
