#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ppgbp/dataset.hpp"
#include "ppgbp/error.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp {

/// Two-class synthetic PPG corpus: each segment is a band-limited pulse
/// train (harmonics 1..5 of a fundamental) plus baseline wander and white
/// noise. PreHypertension pulses sit at 0.9-1.3 Hz, Hypertension pulses at
/// 2.4-3.2 Hz.
struct SyntheticConfig {
  std::size_t n_segments = 600;
  std::uint64_t seed = 7;
  double noise_sd = 0.15;
  double wander_amplitude = 0.4;
  double offset = 2000.0;
  double scale = 100.0;
};

inline std::vector<double> synthetic_pulse(BinaryClass cls, Rng& rng, const SyntheticConfig& c) {
  const bool hyper = cls == BinaryClass::Hypertension;
  const double f0 = hyper ? rng.uniform(2.4, 3.2) : rng.uniform(0.9, 1.3);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double wander_f = rng.uniform(0.05, 0.3);
  const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double amp[5], jitter[5];
  for (int k = 0; k < 5; ++k) {
    amp[k] = rng.uniform(0.8, 1.2) / (k + 1.0);
    jitter[k] = rng.uniform(-0.3, 0.3);
  }
  std::vector<double> x(kSegmentLength);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double t = static_cast<double>(n) / kSampleRateHz;
    double v = 0.0;
    for (int k = 0; k < 5; ++k) v += amp[k] * std::cos(2.0 * std::numbers::pi * (k + 1) * f0 * t + (k + 1) * phase + jitter[k]);
    v += c.wander_amplitude * std::sin(2.0 * std::numbers::pi * wander_f * t + wander_phase);
    v += c.noise_sd * rng.normal();
    x[n] = c.offset + c.scale * v;
  }
  return x;
}

/// One single-segment subject per sample ("syn0000", ...), classes
/// alternating. Records carry blood pressures consistent with the class.
inline std::vector<PpgSegment> generate_synthetic(const SyntheticConfig& config) {
  if (config.n_segments < 2) fail(ErrorCode::ConfigError, "synthetic corpus needs >= 2 segments");
  std::vector<PpgSegment> out;
  out.reserve(config.n_segments);
  for (std::size_t i = 0; i < config.n_segments; ++i) {
    Rng rng(derive_seed(config.seed, i));
    const auto cls = i % 2 == 0 ? BinaryClass::PreHypertension : BinaryClass::Hypertension;
    SegmentRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn%04zu", i);
    r.subject_id = id;
    r.segment_index = 1;
    r.sample_path = std::string(id) + "_1.txt";
    if (cls == BinaryClass::Hypertension) {
      r.sbp = std::round(rng.uniform(141.0, 175.0));
      r.dbp = std::round(rng.uniform(80.0, 99.0));
    } else {
      r.sbp = std::round(rng.uniform(100.0, 135.0));
      r.dbp = std::round(rng.uniform(60.0, 85.0));
    }
    r.stage = derive_stage(r.sbp, r.dbp);
    r.label = binarize(r.stage);
    out.push_back({synthetic_pulse(cls, rng, config), kSampleRateHz, r});
  }
  return out;
}

/// Writes manifest.csv plus one whitespace-separated sample file per segment;
/// the result loads with load_manifest.
inline std::filesystem::path write_corpus(const std::vector<PpgSegment>& segments, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string());
  const auto manifest = dir / "manifest.csv";
  std::ofstream m(manifest);
  if (!m) fail(ErrorCode::IoError, "cannot write " + manifest.string());
  m << kManifestHeader << '\n';
  for (const auto& s : segments) {
    const auto file = s.record.sample_path.filename();
    m << s.record.subject_id << ',' << s.record.segment_index << ',' << file.string() << ',' << s.record.sbp << ','
      << s.record.dbp << '\n';
    std::ofstream f(dir / file);
    if (!f) fail(ErrorCode::IoError, "cannot write " + (dir / file).string());
    f.precision(17);
    for (double v : s.samples) f << v << '\n';
    if (!f) fail(ErrorCode::IoError, "write failed: " + (dir / file).string());
  }
  if (!m) fail(ErrorCode::IoError, "write failed: " + manifest.string());
  return manifest;
}

}  // namespace ppgbp
