#pragma once

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppgbp/error.hpp"
#include "ppgbp/experiment/config.hpp"
#include "ppgbp/metrics.hpp"
#include "ppgbp/nn/train.hpp"
#include "ppgbp/provenance.hpp"

namespace ppgbp::experiment {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "0.1.0";

struct ClassResult {
  ConfusionMatrix confusion;
  MetricsReport metrics;
  bool operator==(const ClassResult&) const = default;
};

struct StageCount {
  std::string stage;
  std::size_t samples = 0;
  bool operator==(const StageCount&) const = default;
};

struct RunReport {
  std::string kind = "base";  ///< "base" or "meta"
  std::string model;          ///< table label, e.g. "LSTM-CNN" or "Meta LSTM-CNN"
  std::string head;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  ///< "ok" or "failed"
  std::string error;
  std::string error_code;
  /// "test" for every row; meta rows also carry the fold-2 resubstitution
  /// accuracy as a diagnostic.
  std::string evaluation = "test";
  std::vector<ClassResult> classes;  ///< PreHypertension then Hypertension
  Metric fold2_accuracy;
  std::vector<nn::EpochRecord> curve;
  int best_epoch = 0;
  bool stopped_early = false;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<StageCount> audit;
  bool leakage_checked = false;
  double wall_clock_seconds = 0.0;
  ExperimentConfig config;
  std::string library_version = kLibraryVersion;
  std::string compiler = __VERSION__;
  std::string eigen_version = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);

  bool ok() const { return status == "ok"; }

  /// Accuracy is the same for both classes; taken from the first.
  Metric accuracy() const { return classes.empty() ? Metric{} : classes.front().metrics.accuracy; }

  /// In-memory provenance record, not serialized.
  FitAudit fit_audit;
};

namespace detail {

inline nlohmann::json metric_json(const Metric& m) {
  if (!m) return nullptr;
  return {{"num", m->num}, {"den", m->den}, {"value", m->value()}};
}

inline Metric metric_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return Ratio::make(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}

inline nlohmann::json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline BinaryClass class_from_name(const std::string& s) {
  if (s == to_string(BinaryClass::PreHypertension)) return BinaryClass::PreHypertension;
  if (s == to_string(BinaryClass::Hypertension)) return BinaryClass::Hypertension;
  fail(ErrorCode::InvalidSpec, "unknown class " + s);
}

}  // namespace detail

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"class", to_string(c.metrics.positive_class)},
                       {"tp", c.confusion.tp},
                       {"fp", c.confusion.fp},
                       {"fn", c.confusion.fn},
                       {"tn", c.confusion.tn},
                       {"precision", detail::metric_json(c.metrics.precision)},
                       {"recall", detail::metric_json(c.metrics.recall)},
                       {"f1", detail::metric_json(c.metrics.f1)},
                       {"specificity", detail::metric_json(c.metrics.specificity)},
                       {"accuracy", detail::metric_json(c.metrics.accuracy)}});
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : r.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"train_loss", detail::finite_or_null(e.train_loss)},
                     {"val_loss", detail::finite_or_null(e.val_loss)},
                     {"train_accuracy", e.train_accuracy}});
  }
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& a : r.audit) audit.push_back({{"stage", a.stage}, {"samples", a.samples}});
  return {{"kind", r.kind},
          {"model", r.model},
          {"head", r.head},
          {"batch_size", r.batch_size},
          {"seed", r.seed},
          {"status", r.status},
          {"error", r.error},
          {"error_code", r.error_code},
          {"evaluation", r.evaluation},
          {"classes", classes},
          {"fold2_accuracy", detail::metric_json(r.fold2_accuracy)},
          {"curve", curve},
          {"best_epoch", r.best_epoch},
          {"stopped_early", r.stopped_early},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"audit", audit},
          {"leakage_checked", r.leakage_checked},
          {"wall_clock_seconds", r.wall_clock_seconds},
          {"config", to_json(r.config)},
          {"versions", {{"library", r.library_version}, {"compiler", r.compiler}, {"eigen", r.eigen_version}}}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
  try {
    RunReport r;
    r.kind = j.at("kind").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.head = j.at("head").get<std::string>();
    r.batch_size = j.at("batch_size").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.error_code = j.at("error_code").get<std::string>();
    r.evaluation = j.at("evaluation").get<std::string>();
    for (const auto& c : j.at("classes")) {
      ClassResult cr;
      const auto cls = detail::class_from_name(c.at("class").get<std::string>());
      cr.confusion = {c.at("tp").get<std::int64_t>(), c.at("fp").get<std::int64_t>(), c.at("fn").get<std::int64_t>(),
                      c.at("tn").get<std::int64_t>(), cls};
      cr.metrics.positive_class = cls;
      cr.metrics.precision = detail::metric_from(c.at("precision"));
      cr.metrics.recall = detail::metric_from(c.at("recall"));
      cr.metrics.f1 = detail::metric_from(c.at("f1"));
      cr.metrics.specificity = detail::metric_from(c.at("specificity"));
      cr.metrics.accuracy = detail::metric_from(c.at("accuracy"));
      r.classes.push_back(cr);
    }
    r.fold2_accuracy = detail::metric_from(j.at("fold2_accuracy"));
    for (const auto& e : j.at("curve")) {
      r.curve.push_back({e.at("epoch").get<int>(), detail::number_or_nan(e.at("train_loss")),
                         detail::number_or_nan(e.at("val_loss")), e.at("train_accuracy").get<double>()});
    }
    r.best_epoch = j.at("best_epoch").get<int>();
    r.stopped_early = j.at("stopped_early").get<bool>();
    r.n_train = j.at("n_train").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    for (const auto& a : j.at("audit")) r.audit.push_back({a.at("stage").get<std::string>(), a.at("samples").get<std::size_t>()});
    r.leakage_checked = j.at("leakage_checked").get<bool>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.config = config_from_json(j.at("config"));
    r.library_version = j.at("versions").at("library").get<std::string>();
    r.compiler = j.at("versions").at("compiler").get<std::string>();
    r.eigen_version = j.at("versions").at("eigen").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("report json: ") + e.what());
  }
}

inline nlohmann::json reports_to_json(const std::vector<RunReport>& reports) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : reports) runs.push_back(to_json(r));
  return {{"schema", "ppgbp-report"}, {"schema_version", kReportSchemaVersion}, {"runs", runs}};
}

inline std::vector<RunReport> reports_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "ppgbp-report") fail(ErrorCode::InvalidSpec, "not a report file");
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      fail(ErrorCode::InvalidSpec, "unsupported report schema version", j.at("schema_version").get<int>());
    }
    std::vector<RunReport> out;
    for (const auto& r : j.at("runs")) out.push_back(report_from_json(r));
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("report json: ") + e.what());
  }
}

inline constexpr const char* kCsvHeader = "model,head,batch_size,class,precision,recall,f1,specificity,accuracy";

/// Two rows (one per positive class) for every successful run.
inline std::string reports_to_csv(const std::vector<RunReport>& reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) {
    if (!r.ok()) continue;
    for (const auto& c : r.classes) {
      const auto& m = c.metrics;
      out += r.model + "," + r.head + "," + std::to_string(r.batch_size) + "," + std::string(to_string(m.positive_class)) +
             "," + format_fraction(m.precision) + "," + format_fraction(m.recall) + "," + format_fraction(m.f1) + "," +
             format_fraction(m.specificity) + "," + format_fraction(m.accuracy) + "\n";
    }
  }
  return out;
}

/// Plot-ready training curves: one row per (run, epoch).
inline std::string curves_to_csv(const std::vector<RunReport>& reports) {
  std::string out = "model,head,batch_size,epoch,train_loss,val_loss,train_accuracy\n";
  char buf[128];
  for (const auto& r : reports)
    for (const auto& e : r.curve) {
      std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.6f", e.epoch, e.train_loss, e.val_loss, e.train_accuracy);
      out += r.model + "," + r.head + "," + std::to_string(r.batch_size) + "," + buf + "\n";
    }
  return out;
}

enum class ReportFormat { Json, Csv };

inline ReportFormat format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  fail(ErrorCode::ConfigError, "format must be json or csv");
}

/// JSON writes report.json; CSV writes metrics.csv and curves.csv.
inline std::vector<std::filesystem::path> emit_report(const std::vector<RunReport>& reports, ReportFormat format,
                                                      const std::filesystem::path& dir) {
  if (reports.empty()) fail(ErrorCode::Empty, "no reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + p.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "write failed: " + p.string());
    return p;
  };
  if (format == ReportFormat::Json) return {write(dir / "report.json", reports_to_json(reports).dump(2) + "\n")};
  return {write(dir / "metrics.csv", reports_to_csv(reports)), write(dir / "curves.csv", curves_to_csv(reports))};
}

inline std::vector<RunReport> load_reports(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("report json: ") + e.what());
  }
  return reports_from_json(j);
}

}  // namespace ppgbp::experiment
