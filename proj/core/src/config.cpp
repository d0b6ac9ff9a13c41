#include "msml/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msml/error.hpp"

namespace msml {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      v = static_cast<T>(std::stod(text, &used));
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a number, got '" + text + "'");
    }
  } else {
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
      throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects an integer, got '" + text + "'");
    return v;
  }
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' expects a comma-separated list");
  return out;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += num(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}


SplitRatio parse_ratio(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(parse_number<double>("ratio", trim(item)));
  if (parts.size() != 3) throw Error(ErrorCode::InvalidConfig, "ratio must look like 5:1:1");
  for (double p : parts)
    if (!(p > 0.0)) throw Error(ErrorCode::InvalidConfig, "ratio components must be positive");
  return {parts[0], parts[1], parts[2]};
}

}  // namespace

const char* to_string(Preprocessor p) noexcept { return p == Preprocessor::Pca ? "pca" : "none"; }
const char* to_string(WeightsMode w) noexcept { return w == WeightsMode::Fresh ? "fresh" : "pretrained"; }
const char* to_string(FineTuning f) noexcept { return f == FineTuning::Finetuned ? "finetuned" : "frozen"; }

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": empty key");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string& KeyValueConfig::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::InvalidConfig, "missing key '" + key + "'");
  return it->second;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::InvalidConfig, "override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string KeyValueConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::vector<std::size_t> encoder_preset(const std::string& name) {
  if (name == "mlp") return {256, 128};
  if (name == "mlp-small") return {64, 32};
  if (name == "mlp-tiny") return {16, 8};
  throw Error(ErrorCode::InvalidConfig, "unknown encoder preset '" + name + "'");
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv.values()) {
    if (key == "dataset") c.dataset = value;
    else if (key == "pca_model") c.pca_model = value;
    else if (key == "checkpoint") c.checkpoint = value;
    else if (key == "pretrained_checkpoint") c.pretrained_checkpoint = value;
    else if (key == "report_dir") c.report_dir = value;
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "threads") c.threads = parse_number<int>(key, value);
    else if (key == "n_samples") c.synth.n_samples = parse_number<std::uint32_t>(key, value);
    else if (key == "bands") c.synth.bands = parse_number<std::uint32_t>(key, value);
    else if (key == "height") c.synth.height = parse_number<std::uint32_t>(key, value);
    else if (key == "width") c.synth.width = parse_number<std::uint32_t>(key, value);
    else if (key == "classes") c.synth.classes = parse_number<std::uint32_t>(key, value);
    else if (key == "latent_rank") c.synth.latent_rank = parse_number<std::uint32_t>(key, value);
    else if (key == "noise_sigma") c.synth.noise_sigma = parse_number<double>(key, value);
    else if (key == "pixel_jitter") c.synth.pixel_jitter = parse_number<double>(key, value);
    else if (key == "ratio") c.ratio = parse_ratio(value);
    else if (key == "pca_fraction") c.pca_fraction = parse_number<double>(key, value);
    else if (key == "pca_k") c.pca_k = parse_number<std::size_t>(key, value);
    else if (key == "pca_variance") c.pca_variance = parse_number<double>(key, value);
    else if (key == "preprocessor") {
      if (value == "pca") c.preprocessor = Preprocessor::Pca;
      else if (value == "none") c.preprocessor = Preprocessor::None;
      else throw Error(ErrorCode::InvalidConfig, "preprocessor must be pca or none");
    } else if (key == "encoder") {
      c.encoder = value;
      if (!kv.has("encoder_hidden")) c.encoder_hidden = encoder_preset(value);
    } else if (key == "encoder_hidden") c.encoder_hidden = parse_list<std::size_t>(key, value);
    else if (key == "head_hidden") c.head_hidden = parse_list<std::size_t>(key, value);
    else if (key == "dropout") c.dropout = parse_list<double>(key, value);
    else if (key == "weights") {
      if (value == "fresh") c.weights = WeightsMode::Fresh;
      else if (value == "pretrained") c.weights = WeightsMode::Pretrained;
      else throw Error(ErrorCode::InvalidConfig, "weights must be fresh or pretrained");
    } else if (key == "finetune") {
      if (value == "finetuned") c.finetune = FineTuning::Finetuned;
      else if (value == "frozen") c.finetune = FineTuning::Frozen;
      else throw Error(ErrorCode::InvalidConfig, "finetune must be finetuned or frozen");
    } else if (key == "batch_size") c.train.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "max_epochs") c.train.max_epochs = parse_number<int>(key, value);
    else if (key == "early_stop_patience") c.train.early_stop_patience = parse_number<int>(key, value);
    else if (key == "plateau_patience") c.train.plateau_patience = parse_number<int>(key, value);
    else if (key == "plateau_factor") c.train.plateau_factor = parse_number<double>(key, value);
    else if (key == "lr") c.train.initial_lr = parse_number<double>(key, value);
    else if (key == "loss_mode") {
      if (value == "bce") c.train.loss_mode = LossMode::Bce;
      else if (value == "softcon_pretrain") c.train.loss_mode = LossMode::SoftconPretrain;
      else throw Error(ErrorCode::InvalidConfig, "loss_mode must be bce or softcon_pretrain");
    } else if (key == "pretrain_epochs") c.train.pretrain_epochs = parse_number<int>(key, value);
    else if (key == "pretrain_lr") c.train.pretrain_lr = parse_number<double>(key, value);
    else if (key == "tau") c.train.tau = parse_number<double>(key, value);
    else if (key == "lambda") c.train.lambda = parse_number<double>(key, value);
    else if (key == "aug_noise") c.train.aug_noise = parse_number<double>(key, value);
    else if (key == "aug_band_dropout") c.train.aug_band_dropout = parse_number<double>(key, value);
    else if (key == "threshold") c.threshold = parse_number<double>(key, value);
    else if (key == "eval_split") {
      if (value == "train") c.eval_split = Split::Train;
      else if (value == "val") c.eval_split = Split::Val;
      else if (value == "test") c.eval_split = Split::Test;
      else throw Error(ErrorCode::InvalidConfig, "eval_split must be train, val or test");
    } else if (key == "bench_samples") c.bench_samples = parse_number<std::size_t>(key, value);
    else if (key == "bench_repeats") c.bench_repeats = parse_number<std::size_t>(key, value);
    else if (key == "bench_batch") c.bench_batch = parse_number<std::size_t>(key, value);
    else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("dataset", dataset.string());
  kv.set("pca_model", pca_model.string());
  kv.set("checkpoint", checkpoint.string());
  kv.set("pretrained_checkpoint", pretrained_checkpoint.string());
  kv.set("report_dir", report_dir.string());
  kv.set("seed", std::to_string(seed));
  kv.set("threads", std::to_string(threads));
  kv.set("n_samples", std::to_string(synth.n_samples));
  kv.set("bands", std::to_string(synth.bands));
  kv.set("height", std::to_string(synth.height));
  kv.set("width", std::to_string(synth.width));
  kv.set("classes", std::to_string(synth.classes));
  kv.set("latent_rank", std::to_string(synth.latent_rank));
  kv.set("noise_sigma", num(synth.noise_sigma));
  kv.set("pixel_jitter", num(synth.pixel_jitter));
  kv.set("ratio", num(ratio.train) + ":" + num(ratio.val) + ":" + num(ratio.test));
  kv.set("pca_fraction", num(pca_fraction));
  kv.set("pca_k", std::to_string(pca_k));
  kv.set("pca_variance", num(pca_variance));
  kv.set("preprocessor", to_string(preprocessor));
  kv.set("encoder", encoder);
  kv.set("encoder_hidden", join(encoder_hidden));
  kv.set("head_hidden", join(head_hidden));
  kv.set("dropout", join(dropout));
  kv.set("weights", to_string(weights));
  kv.set("finetune", to_string(finetune));
  kv.set("batch_size", std::to_string(train.batch_size));
  kv.set("max_epochs", std::to_string(train.max_epochs));
  kv.set("early_stop_patience", std::to_string(train.early_stop_patience));
  kv.set("plateau_patience", std::to_string(train.plateau_patience));
  kv.set("plateau_factor", num(train.plateau_factor));
  kv.set("lr", num(train.initial_lr));
  kv.set("loss_mode", to_string(train.loss_mode));
  kv.set("pretrain_epochs", std::to_string(train.pretrain_epochs));
  kv.set("pretrain_lr", num(train.pretrain_lr));
  kv.set("tau", num(train.tau));
  kv.set("lambda", num(train.lambda));
  kv.set("aug_noise", num(train.aug_noise));
  kv.set("aug_band_dropout", num(train.aug_band_dropout));
  kv.set("threshold", num(threshold));
  kv.set("eval_split", to_string(eval_split));
  kv.set("bench_samples", std::to_string(bench_samples));
  kv.set("bench_repeats", std::to_string(bench_repeats));
  kv.set("bench_batch", std::to_string(bench_batch));
  return kv;
}

void ExperimentConfig::validate() const {
  if (threads < 1) throw Error(ErrorCode::InvalidConfig, "threads must be >= 1");
  if (!(pca_fraction > 0.0 && pca_fraction <= 1.0)) throw Error(ErrorCode::InvalidConfig, "pca_fraction must lie in (0, 1]");
  if (pca_variance < 0.0 || pca_variance > 1.0) throw Error(ErrorCode::InvalidConfig, "pca_variance must lie in [0, 1]");
  if (pca_k == 0 && pca_variance == 0.0) throw Error(ErrorCode::InvalidConfig, "pca_k must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0, 1)");
  if (bench_samples == 0 || bench_repeats == 0 || bench_batch == 0)
    throw Error(ErrorCode::InvalidConfig, "bench counts must be positive");
  train.validate();
}

}  // namespace msml
