// ppgbp: command-line front end for the PPG blood-pressure classification
// pipeline. Exit codes: 0 ok, 1 config error, 2 data error, 3 training failure.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "ppgbp/experiment/runner.hpp"
#include "ppgbp/spectral.hpp"
#include "ppgbp/synthetic.hpp"

namespace fs = std::filesystem;
using namespace ppgbp;
using namespace ppgbp::experiment;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kTraining = 3 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidSpec:
    case ErrorCode::EvenKernel:
    case ErrorCode::KernelTooLarge:
    case ErrorCode::KernelExceedsInput:
    case ErrorCode::WindowTooLarge:
      return kConfig;
    case ErrorCode::MissingFile:
    case ErrorCode::MalformedRow:
    case ErrorCode::InvalidBp:
    case ErrorCode::WrongLength:
    case ErrorCode::NonNumericToken:
    case ErrorCode::TooFewSubjects:
    case ErrorCode::SignalTooShort:
    case ErrorCode::TooShort:
    case ErrorCode::ZeroVariance:
    case ErrorCode::InvalidLength:
    case ErrorCode::IoError:
      return kData;
    default:
      return kTraining;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  bool synthetic = false;
  std::string manifest;
  std::string input;
  std::size_t segments = 600;
  std::size_t spectrograms = 0;
};

ExperimentConfig apply_overrides(ExperimentConfig c, const Options& o) {
  if (o.seed) c.seed = *o.seed;
  if (!o.manifest.empty()) {
    c.manifest = o.manifest;
    c.synthetic = false;
  }
  if (o.synthetic) c.synthetic = true;
  if (!o.out.empty()) c.out = o.out;
  validate(c);
  return c;
}

ExperimentConfig load_run_config(const Options& o) {
  return apply_overrides(o.config.empty() ? ExperimentConfig{} : load_config(o.config), o);
}

void print_table(const std::vector<RunReport>& reports) {
  std::printf("%-22s %-8s %5s  %-16s %9s %9s %9s %11s %9s\n", "model", "head", "batch", "class", "precision", "recall",
              "f1", "specificity", "accuracy");
  for (const auto& r : reports) {
    if (!r.ok()) {
      std::printf("%-22s %-8s %5d  failed: %s\n", r.model.c_str(), r.head.c_str(), r.batch_size, r.error.c_str());
      continue;
    }
    for (const auto& c : r.classes) {
      const auto& m = c.metrics;
      std::printf("%-22s %-8s %5d  %-16s %9s %9s %9s %11s %9s\n", r.model.c_str(), r.head.c_str(), r.batch_size,
                  std::string(to_string(m.positive_class)).c_str(), format_percent(m.precision).c_str(),
                  format_percent(m.recall).c_str(), format_percent(m.f1).c_str(),
                  format_percent(m.specificity).c_str(), format_percent(m.accuracy).c_str());
    }
  }
}

void emit(const std::vector<RunReport>& reports, const Options& o, const fs::path& dir) {
  for (const auto& f : emit_report(reports, experiment::format_from_string(o.format), dir))
    std::fprintf(stderr, "wrote %s\n", f.string().c_str());
}

fs::path out_dir(const Options& o, const ExperimentConfig& c) { return o.out.empty() ? c.out : fs::path(o.out); }

// --- verbs ------------------------------------------------------------------

int cmd_synth(const Options& o) {
  if (o.out.empty()) fail(ErrorCode::ConfigError, "synth needs --out");
  SyntheticConfig sc;
  sc.n_segments = o.segments;
  if (o.seed) sc.seed = *o.seed;
  const auto manifest = write_corpus(generate_synthetic(sc), o.out);
  std::printf("%zu segments -> %s\n", sc.n_segments, manifest.string().c_str());
  return kOk;
}

int cmd_ingest(const Options& o) {
  const auto c = load_run_config(o);
  const auto raw = load_raw_segments(c);
  std::map<std::string, int> stages, classes;
  std::vector<SegmentRecord> records;
  for (const auto& s : raw) {
    ++stages[std::string(to_string(s.record.stage))];
    ++classes[std::string(to_string(s.record.label))];
    records.push_back(s.record);
  }
  const auto plan = split_subjects(records, c.effective_train_fraction(), derive_seed(c.seed, hash_name("split")));
  std::printf("segments %zu, subjects %zu\n", raw.size(), distinct_subjects(records).size());
  for (const auto& [k, v] : stages) std::printf("  stage %-16s %d\n", k.c_str(), v);
  for (const auto& [k, v] : classes) std::printf("  class %-16s %d\n", k.c_str(), v);
  const auto corpus = build_corpus(c, raw);
  std::printf("split: %zu train / %zu test subjects, %zu train / %zu test segments\n", plan.train.size(),
              plan.test.size(), corpus.train.size(), corpus.test.size());
  return kOk;
}

int cmd_preprocess(const Options& o) {
  const auto c = load_run_config(o);
  const auto dir = out_dir(o, c);
  std::vector<PpgSegment> processed;
  for (const auto& s : load_raw_segments(c)) processed.push_back(preprocess_pipeline(s, c.preprocess));
  const auto manifest = write_corpus(processed, dir / "preprocessed");
  std::printf("%zu segments -> %s\n", processed.size(), manifest.string().c_str());
  if (o.spectrograms > 0) {
    fs::create_directories(dir / "spectrograms");
    const auto cfg = nn::default_stft();
    for (std::size_t i = 0; i < std::min(o.spectrograms, processed.size()); ++i) {
      const auto path = dir / "spectrograms" / (processed[i].record.subject_id + "_" + std::to_string(processed[i].record.segment_index) + ".csv");
      std::ofstream out(path);
      if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
      write_spectrogram_csv(out, stft(processed[i].samples, cfg, processed[i].sample_rate_hz));
    }
  }
  return kOk;
}

int cmd_train(const Options& o, bool stacked) {
  auto c = load_run_config(o);
  if (stacked) c.stacked = true;
  const auto dir = out_dir(o, c);
  const auto r = run_experiment(c, dir / "model");
  print_table({r});
  emit({r}, o, dir);
  return kOk;
}

int cmd_evaluate(const Options& o) {
  if (o.input.empty()) fail(ErrorCode::ConfigError, "evaluate needs --input <model dir>");
  const auto c = load_run_config(o);
  const auto r = evaluate_saved(c, o.input);
  print_table({r});
  if (!o.out.empty()) emit({r}, o, o.out);
  return kOk;
}

int cmd_grid(const Options& o) {
  auto g = o.config.empty() ? GridConfig{} : load_grid(o.config);
  g.base = apply_overrides(g.base, o);
  const auto configs = expand(g);
  const auto reports = run_grid(configs, [](const RunReport& r, std::size_t i, std::size_t n) {
    std::fprintf(stderr, "[%zu/%zu] %s %s b%d: %s (%.1f s)\n", i, n, r.model.c_str(), r.head.c_str(), r.batch_size,
                 r.ok() ? ("accuracy " + format_fraction(r.accuracy())).c_str() : r.error.c_str(),
                 r.wall_clock_seconds);
  });
  print_table(reports);
  emit(reports, o, out_dir(o, g.base));
  const auto failed = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return !r.ok(); });
  if (failed) std::fprintf(stderr, "%td of %zu runs failed\n", failed, reports.size());
  return failed ? kTraining : kOk;
}

int cmd_report(const Options& o) {
  if (o.input.empty()) fail(ErrorCode::ConfigError, "report needs --input <report.json>");
  const auto reports = load_reports(o.input);
  print_table(reports);
  if (!o.out.empty()) emit(reports, o, o.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG hypertension classification: preprocessing, deep feature extractors, SVM/RF heads, stacking"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run or grid config file");
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--synthetic", o.synthetic, "Use the built-in synthetic corpus");
    sub->add_option("--manifest", o.manifest, "Dataset manifest CSV");
    return sub;
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (manifest + segment files)");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--segments", o.segments, "Number of segments")->check(CLI::PositiveNumber);
  synth->add_option("--seed", o.seed, "Generator seed");

  auto* ingest = add_common(app.add_subcommand("ingest", "Load and validate the dataset, print counts"));
  auto* preprocess = add_common(app.add_subcommand("preprocess", "Write conditioned segments and spectrogram CSVs"));
  preprocess->add_option("--spectrograms", o.spectrograms, "Dump log-magnitude spectrograms for the first N segments");
  auto* train = add_common(app.add_subcommand("train", "Train one extractor + head and report on the test split"));
  auto* stack = add_common(app.add_subcommand("stack", "Train a stacked model and report on the test split"));
  auto* evaluate = add_common(app.add_subcommand("evaluate", "Score a saved model on the test split"));
  evaluate->add_option("--input", o.input, "Model directory written by train or stack")->required();
  auto* grid = add_common(app.add_subcommand("grid", "Run the extractor x head x batch-size grid"));
  auto* report = app.add_subcommand("report", "Print or convert a saved report");
  report->add_option("--input", o.input, "report.json")->required();
  report->add_option("--out", o.out, "Output directory");
  report->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*ingest) return cmd_ingest(o);
    if (*preprocess) return cmd_preprocess(o);
    if (*train) return cmd_train(o, false);
    if (*stack) return cmd_train(o, true);
    if (*evaluate) return cmd_evaluate(o);
    if (*grid) return cmd_grid(o);
    if (*report) return cmd_report(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kTraining;
  }
  return kOk;
}
