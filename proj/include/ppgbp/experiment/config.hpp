#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ppgbp/dataset.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/nn/architectures.hpp"
#include "ppgbp/preprocess.hpp"

namespace ppgbp::experiment {

enum class Head { Softmax, Svm, Rf };

inline constexpr std::array<Head, 3> kAllHeads = {Head::Softmax, Head::Svm, Head::Rf};

constexpr std::string_view to_string(Head h) {
  switch (h) {
    case Head::Softmax: return "softmax";
    case Head::Svm: return "svm";
    case Head::Rf: return "rf";
  }
  return "?";
}

inline Head head_from_string(std::string_view s) {
  for (auto h : kAllHeads)
    if (to_string(h) == s) return h;
  fail(ErrorCode::ConfigError, "unknown head: " + std::string(s));
}

/// Everything that determines one run.
struct ExperimentConfig {
  std::filesystem::path manifest = "data/ppg-bp/manifest.csv";
  bool synthetic = false;
  std::size_t synthetic_train = 400;
  std::size_t synthetic_test = 200;
  std::uint64_t synthetic_seed = 7;
  double train_fraction = 0.7;
  PreprocessConfig preprocess{};
  nn::Extractor extractor = nn::Extractor::LstmCnn;
  Head head = Head::Softmax;
  int batch_size = 16;
  bool stacked = false;
  std::uint64_t seed = 42;
  std::filesystem::path out = "runs";
  /// 0 keeps the batch-size default (100 for 16, 300 for 3).
  int max_epochs = 0;

  /// Fraction actually used for the subject split.
  double effective_train_fraction() const {
    if (!synthetic) return train_fraction;
    return static_cast<double>(synthetic_train) / static_cast<double>(synthetic_train + synthetic_test);
  }

  bool uses_stft() const { return extractor == nn::Extractor::StftCnn; }

  bool operator==(const ExperimentConfig&) const = default;
};

/// A base config plus the axes to sweep.
struct GridConfig {
  ExperimentConfig base;
  std::vector<nn::Extractor> extractors{nn::kAllExtractors.begin(), nn::kAllExtractors.end()};
  std::vector<Head> heads{kAllHeads.begin(), kAllHeads.end()};
  std::vector<int> batch_sizes{16, 3};
  bool stacked = true;
  /// Batch size of the stacked (meta) rows.
  int stack_batch_size = 16;
};

namespace detail {

using ppgbp::detail::trim;

inline bool parse_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(ErrorCode::ConfigError, "expected true/false, got '" + std::string(v) + "'");
}

inline double parse_double(std::string_view v) {
  double d = 0.0;
  if (!ppgbp::detail::parse_finite(v, d)) fail(ErrorCode::ConfigError, "expected a number, got '" + std::string(v) + "'");
  return d;
}

inline long long parse_integer(std::string_view v) {
  long long x = 0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::ConfigError, "expected an integer, got '" + std::string(v) + "'");
  }
  return x;
}

inline std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (v.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::ConfigError, "expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return x;
}

inline std::string unquote(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  return std::string(v);
}

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  for (auto tok : ppgbp::detail::split_csv(v))
    if (!tok.empty()) out.push_back(unquote(tok));
  return out;
}

/// `key = value` lines; `#` starts a comment. Keys must be unique.
inline std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = line;
    bool quoted = false;
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (l[i] == '"') quoted = !quoted;
      if (l[i] == '#' && !quoted) {
        l = l.substr(0, i);
        break;
      }
    }
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value", line_no);
    const std::string key(trim(l.substr(0, eq)));
    const std::string value = unquote(trim(l.substr(eq + 1)));
    if (key.empty()) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key", line_no);
    if (seen.count(key)) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": duplicate key " + key, line_no);
    seen[key] = line_no;
    out.emplace_back(key, value);
  }
  return out;
}

/// Applies one scalar key; returns false for keys it does not know.
inline bool apply_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "manifest") c.manifest = v;
  else if (key == "synthetic") c.synthetic = parse_bool(v);
  else if (key == "synthetic_train") c.synthetic_train = static_cast<std::size_t>(parse_u64(v));
  else if (key == "synthetic_test") c.synthetic_test = static_cast<std::size_t>(parse_u64(v));
  else if (key == "synthetic_seed") c.synthetic_seed = parse_u64(v);
  else if (key == "train_fraction") c.train_fraction = parse_double(v);
  else if (key == "median_kernel") c.preprocess.median_kernel = static_cast<int>(parse_integer(v));
  else if (key == "filter_order") c.preprocess.filter.order = static_cast<int>(parse_integer(v));
  else if (key == "filter_cutoff_hz") c.preprocess.filter.cutoff_hz = parse_double(v);
  else if (key == "filter_attenuation_db") c.preprocess.filter.stopband_attenuation_db = parse_double(v);
  else if (key == "detrend") c.preprocess.detrend = parse_bool(v);
  else if (key == "normalize") c.preprocess.normalize = parse_bool(v);
  else if (key == "clip_sigma") c.preprocess.clip_sigma = v == "none" ? std::nullopt : std::optional<double>(parse_double(v));
  else if (key == "extractor") c.extractor = nn::extractor_from_string(v);
  else if (key == "head") c.head = head_from_string(v);
  else if (key == "batch_size") c.batch_size = static_cast<int>(parse_integer(v));
  else if (key == "stacked") c.stacked = parse_bool(v);
  else if (key == "seed") c.seed = parse_u64(v);
  else if (key == "out") c.out = v;
  else if (key == "max_epochs") c.max_epochs = static_cast<int>(parse_integer(v));
  else return false;
  return true;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  if (c.batch_size < 1) fail(ErrorCode::ConfigError, "batch_size must be >= 1");
  if (c.max_epochs < 0) fail(ErrorCode::ConfigError, "max_epochs must be >= 0");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) fail(ErrorCode::ConfigError, "train_fraction must lie in (0,1)");
  if (c.synthetic && (c.synthetic_train < 2 || c.synthetic_test < 2)) {
    fail(ErrorCode::ConfigError, "synthetic_train and synthetic_test must be >= 2");
  }
  if (c.preprocess.median_kernel < 1 || c.preprocess.median_kernel % 2 == 0) {
    fail(ErrorCode::ConfigError, "median_kernel must be odd and >= 1");
  }
  if (c.preprocess.filter.order < 1) fail(ErrorCode::ConfigError, "filter_order must be >= 1");
  if (!(c.preprocess.filter.cutoff_hz > 0.0 && c.preprocess.filter.cutoff_hz < c.preprocess.filter.sample_rate_hz / 2)) {
    fail(ErrorCode::ConfigError, "filter_cutoff_hz must lie in (0, fs/2)");
  }
  if (!(c.preprocess.filter.stopband_attenuation_db > 0.0)) fail(ErrorCode::ConfigError, "filter_attenuation_db must be > 0");
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  for (const auto& [k, v] : detail::parse_pairs(text))
    if (!detail::apply_key(c, k, v)) fail(ErrorCode::ConfigError, "unknown config key: " + k);
  validate(c);
  return c;
}

/// Grid files use the run keys plus list-valued `extractors`, `heads`,
/// `batch_sizes`, and `stacked` / `stack_batch_size`.
inline GridConfig parse_grid(std::string_view text) {
  GridConfig g;
  for (const auto& [k, v] : detail::parse_pairs(text)) {
    if (k == "extractors") {
      g.extractors.clear();
      for (const auto& s : detail::split_list(v)) g.extractors.push_back(nn::extractor_from_string(s));
    } else if (k == "heads") {
      g.heads.clear();
      for (const auto& s : detail::split_list(v)) g.heads.push_back(head_from_string(s));
    } else if (k == "batch_sizes") {
      g.batch_sizes.clear();
      for (const auto& s : detail::split_list(v)) g.batch_sizes.push_back(static_cast<int>(detail::parse_integer(s)));
    } else if (k == "stacked") {
      g.stacked = detail::parse_bool(v);
    } else if (k == "stack_batch_size") {
      g.stack_batch_size = static_cast<int>(detail::parse_integer(v));
    } else if (!detail::apply_key(g.base, k, v)) {
      fail(ErrorCode::ConfigError, "unknown grid key: " + k);
    }
  }
  validate(g.base);
  if (g.extractors.empty() || g.heads.empty() || g.batch_sizes.empty()) fail(ErrorCode::ConfigError, "empty grid axis");
  for (int b : g.batch_sizes)
    if (b < 1) fail(ErrorCode::ConfigError, "batch sizes must be >= 1");
  return g;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }
inline GridConfig load_grid(const std::filesystem::path& path) { return parse_grid(read_text(path)); }

/// Config text that parses back to `c`.
inline std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "manifest = \"" << c.manifest.string() << "\"\n"
    << "synthetic = " << (c.synthetic ? "true" : "false") << '\n'
    << "synthetic_train = " << c.synthetic_train << '\n'
    << "synthetic_test = " << c.synthetic_test << '\n'
    << "synthetic_seed = " << c.synthetic_seed << '\n'
    << "train_fraction = " << c.train_fraction << '\n'
    << "median_kernel = " << c.preprocess.median_kernel << '\n'
    << "filter_order = " << c.preprocess.filter.order << '\n'
    << "filter_cutoff_hz = " << c.preprocess.filter.cutoff_hz << '\n'
    << "filter_attenuation_db = " << c.preprocess.filter.stopband_attenuation_db << '\n'
    << "detrend = " << (c.preprocess.detrend ? "true" : "false") << '\n'
    << "normalize = " << (c.preprocess.normalize ? "true" : "false") << '\n'
    << "clip_sigma = ";
  if (c.preprocess.clip_sigma) o << *c.preprocess.clip_sigma;
  else o << "none";
  o << '\n'
    << "extractor = " << nn::to_string(c.extractor) << '\n'
    << "head = " << to_string(c.head) << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "stacked = " << (c.stacked ? "true" : "false") << '\n'
    << "seed = " << c.seed << '\n'
    << "out = \"" << c.out.string() << "\"\n"
    << "max_epochs = " << c.max_epochs << '\n';
  return o.str();
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"manifest", c.manifest.string()},
                      {"synthetic", c.synthetic},
                      {"synthetic_train", c.synthetic_train},
                      {"synthetic_test", c.synthetic_test},
                      {"synthetic_seed", c.synthetic_seed},
                      {"train_fraction", c.train_fraction},
                      {"median_kernel", c.preprocess.median_kernel},
                      {"filter_order", c.preprocess.filter.order},
                      {"filter_cutoff_hz", c.preprocess.filter.cutoff_hz},
                      {"filter_attenuation_db", c.preprocess.filter.stopband_attenuation_db},
                      {"detrend", c.preprocess.detrend},
                      {"normalize", c.preprocess.normalize},
                      {"clip_sigma", nullptr},
                      {"extractor", nn::to_string(c.extractor)},
                      {"head", to_string(c.head)},
                      {"batch_size", c.batch_size},
                      {"stacked", c.stacked},
                      {"seed", c.seed},
                      {"out", c.out.string()},
                      {"max_epochs", c.max_epochs}};
  if (c.preprocess.clip_sigma) j["clip_sigma"] = *c.preprocess.clip_sigma;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.manifest = j.at("manifest").get<std::string>();
    c.synthetic = j.at("synthetic").get<bool>();
    c.synthetic_train = j.at("synthetic_train").get<std::size_t>();
    c.synthetic_test = j.at("synthetic_test").get<std::size_t>();
    c.synthetic_seed = j.at("synthetic_seed").get<std::uint64_t>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.preprocess.median_kernel = j.at("median_kernel").get<int>();
    c.preprocess.filter.order = j.at("filter_order").get<int>();
    c.preprocess.filter.cutoff_hz = j.at("filter_cutoff_hz").get<double>();
    c.preprocess.filter.stopband_attenuation_db = j.at("filter_attenuation_db").get<double>();
    c.preprocess.detrend = j.at("detrend").get<bool>();
    c.preprocess.normalize = j.at("normalize").get<bool>();
    if (!j.at("clip_sigma").is_null()) c.preprocess.clip_sigma = j.at("clip_sigma").get<double>();
    c.extractor = nn::extractor_from_string(j.at("extractor").get<std::string>());
    c.head = head_from_string(j.at("head").get<std::string>());
    c.batch_size = j.at("batch_size").get<int>();
    c.stacked = j.at("stacked").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = j.at("out").get<std::string>();
    c.max_epochs = j.at("max_epochs").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config json: ") + e.what());
  }
}

}  // namespace ppgbp::experiment
