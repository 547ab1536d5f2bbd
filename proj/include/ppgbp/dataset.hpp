#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ppgbp/error.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp {

inline constexpr std::size_t kSegmentLength = 2100;
inline constexpr double kSampleRateHz = 1000.0;

enum class HypertensionStage { Normal, Prehypertension, Stage1, Stage2 };

/// Class index 0 is PreHypertension, 1 is Hypertension; this ordering is used
/// for every probability vector and confusion matrix in the library.
enum class BinaryClass { PreHypertension = 0, Hypertension = 1 };

constexpr int class_index(BinaryClass c) { return static_cast<int>(c); }
constexpr BinaryClass class_from_index(int i) {
  return i == 0 ? BinaryClass::PreHypertension : BinaryClass::Hypertension;
}

constexpr std::string_view to_string(HypertensionStage s) {
  switch (s) {
    case HypertensionStage::Normal: return "Normal";
    case HypertensionStage::Prehypertension: return "Prehypertension";
    case HypertensionStage::Stage1: return "Stage1";
    case HypertensionStage::Stage2: return "Stage2";
  }
  return "?";
}

constexpr std::string_view to_string(BinaryClass c) {
  return c == BinaryClass::PreHypertension ? "PreHypertension" : "Hypertension";
}

struct SegmentRecord {
  std::string subject_id;
  int segment_index = 1;
  std::filesystem::path sample_path;
  double sbp = 0.0;
  double dbp = 0.0;
  HypertensionStage stage = HypertensionStage::Normal;
  BinaryClass label = BinaryClass::PreHypertension;

  /// Stable identity used by provenance tracking.
  std::string key() const { return subject_id + "#" + std::to_string(segment_index); }

  bool operator==(const SegmentRecord&) const = default;
};

struct PpgSegment {
  std::vector<double> samples;
  double sample_rate_hz = kSampleRateHz;
  SegmentRecord record;
};

struct SplitPlan {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;

  bool operator==(const SplitPlan&) const = default;
};

/// JNC7 staging; the most severe category triggered by either pressure wins.
inline HypertensionStage derive_stage(double sbp, double dbp) {
  if (!(dbp > 0.0) || !(sbp > dbp)) {
    fail(ErrorCode::InvalidBp, "require sbp > dbp > 0, got sbp=" + std::to_string(sbp) +
                                   " dbp=" + std::to_string(dbp));
  }
  if (sbp >= 160.0 || dbp >= 100.0) return HypertensionStage::Stage2;
  if (sbp >= 140.0 || dbp >= 90.0) return HypertensionStage::Stage1;
  if (sbp >= 120.0 || dbp >= 80.0) return HypertensionStage::Prehypertension;
  return HypertensionStage::Normal;
}

constexpr BinaryClass binarize(HypertensionStage stage) {
  switch (stage) {
    case HypertensionStage::Normal:
    case HypertensionStage::Prehypertension:
      return BinaryClass::PreHypertension;
    case HypertensionStage::Stage1:
    case HypertensionStage::Stage2:
      return BinaryClass::Hypertension;
  }
  return BinaryClass::PreHypertension;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

/// Strict decimal parse: the whole token must be consumed and finite.
inline bool parse_finite(std::string_view token, double& value) {
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

inline bool parse_int(std::string_view token, int& value) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  return !token.empty() && ec == std::errc() && ptr == end;
}

}  // namespace detail

inline constexpr std::string_view kManifestHeader =
    "subject_id,segment_index,sample_file,sbp_mmhg,dbp_mmhg";

/// Reads the manifest CSV. Sample paths are resolved against the manifest's
/// directory and must exist; a missing segment file fails the whole load.
inline std::vector<SegmentRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open manifest " + path.string());
  const auto base = path.parent_path();

  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kManifestHeader) {
    fail(ErrorCode::MalformedRow, "manifest header must be '" + std::string(kManifestHeader) + "'",
         1);
  }

  std::vector<SegmentRecord> records;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    SegmentRecord rec;
    if (fields.size() != 5 || fields[0].empty() || fields[2].empty() ||
        !detail::parse_int(fields[1], rec.segment_index) || rec.segment_index < 1 ||
        !detail::parse_finite(fields[3], rec.sbp) || !detail::parse_finite(fields[4], rec.dbp)) {
      fail(ErrorCode::MalformedRow, path.string() + ":" + std::to_string(line_no), line_no);
    }
    rec.subject_id = std::string(fields[0]);
    rec.sample_path = base / std::string(fields[2]);
    rec.stage = derive_stage(rec.sbp, rec.dbp);
    rec.label = binarize(rec.stage);
    if (!std::filesystem::exists(rec.sample_path)) {
      fail(ErrorCode::MissingFile, "segment file " + rec.sample_path.string() + " (line " +
                                       std::to_string(line_no) + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// Reads whitespace-separated samples; exactly kSegmentLength finite values.
inline std::vector<double> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, "cannot open segment " + path.string());
  std::vector<double> samples;
  samples.reserve(kSegmentLength);
  std::string token;
  while (in >> token) {
    double v = 0.0;
    if (!detail::parse_finite(token, v)) {
      fail(ErrorCode::NonNumericToken, "'" + token + "' in " + path.string());
    }
    samples.push_back(v);
  }
  if (samples.size() != kSegmentLength) {
    fail(ErrorCode::WrongLength,
         path.string() + " has " + std::to_string(samples.size()) + " samples",
         static_cast<std::int64_t>(samples.size()));
  }
  return samples;
}

inline PpgSegment load_segment(const SegmentRecord& record) {
  return PpgSegment{read_samples(record.sample_path), kSampleRateHz, record};
}

inline std::vector<std::string> distinct_subjects(const std::vector<SegmentRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.subject_id);
  return {ids.begin(), ids.end()};
}

/// Subject-level split: every segment of a subject lands on one side.
inline SplitPlan split_subjects(const std::vector<SegmentRecord>& records, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorCode::ConfigError, "train_fraction must lie in (0,1)");
  }
  auto subjects = distinct_subjects(records);
  if (subjects.size() < 2) fail(ErrorCode::TooFewSubjects, "need at least 2 distinct subjects");

  Rng rng(seed);
  rng.shuffle(subjects);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(subjects.size())));

  SplitPlan plan;
  plan.seed = seed;
  plan.train_fraction = train_fraction;
  plan.train.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.test.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train), subjects.end());
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

}  // namespace ppgbp
