#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "ppgbp/rng.hpp"
#include "ppgbp/spectral.hpp"

using namespace ppgbp;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST(Window, HannValuesAndSymmetry) {
  const auto w = make_window(WindowKind::Hann, 8);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_NEAR(w[4], 1.0, 1e-15);
  for (int n = 1; n < 8; ++n) EXPECT_NEAR(w[static_cast<std::size_t>(n)], w[static_cast<std::size_t>(8 - n)], 1e-15);
  EXPECT_EQ(make_window(WindowKind::Rectangular, 4), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_THROW(make_window(WindowKind::Hann, 1), Error);
}

TEST(Stft, FramesMatchDirectDft) {
  for (const auto& cfg : {StftConfig{256, 64, WindowKind::Hann, 256}, StftConfig{100, 30, WindowKind::Hann, 128},
                          StftConfig{60, 60, WindowKind::Rectangular, 60}}) {
    const auto x = random_signal(700, static_cast<std::uint64_t>(cfg.window_length));
    const auto s = stft(x, cfg);
    EXPECT_EQ(s.n_frames, (x.size() - static_cast<std::size_t>(cfg.window_length)) / static_cast<std::size_t>(cfg.hop) + 1);
    const auto w = make_window(cfg.window, cfg.window_length);
    for (std::size_t m = 0; m < s.n_frames; ++m) {
      std::vector<double> frame(static_cast<std::size_t>(cfg.window_length));
      for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = x[m * static_cast<std::size_t>(cfg.hop) + i] * w[i];
      const auto ref = testsupport::naive_dft(frame, static_cast<std::size_t>(cfg.fft_length));
      double norm = 0.0, err = 0.0;
      for (std::size_t k = 0; k < s.n_bins; ++k) {
        norm = std::max(norm, std::abs(ref[k]));
        err = std::max(err, std::abs(s.at(m, k) - ref[k]));
      }
      EXPECT_LE(err, 1e-9 * norm);
    }
  }
}

TEST(Stft, ConstantSignalIsDcOnly) {
  const std::vector<double> x(512, 3.0);
  const auto s = stft(x, StftConfig{128, 64, WindowKind::Rectangular, 128});
  for (std::size_t m = 0; m < s.n_frames; ++m) {
    EXPECT_NEAR(std::abs(s.at(m, 0)), 3.0 * 128, 1e-9);
    for (std::size_t k = 1; k < s.n_bins; ++k) EXPECT_LE(std::abs(s.at(m, k)), 1e-9);
  }
}

TEST(Stft, SinusoidAtBinFourPeaksThere) {
  std::vector<double> x(640);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * std::numbers::pi * 4.0 * static_cast<double>(n) / 64.0);
  const auto s = stft(x, StftConfig{64, 64, WindowKind::Rectangular, 64});
  for (std::size_t m = 0; m < s.n_frames; ++m) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.n_bins; ++k)
      if (std::abs(s.at(m, k)) > std::abs(s.at(m, best))) best = k;
    EXPECT_EQ(best, 4u);
  }
}

TEST(Stft, ParsevalPerFrame) {
  const std::size_t N = 64;
  const auto x = random_signal(N * 6, 2);
  const auto s = stft(x, StftConfig{64, 64, WindowKind::Rectangular, 64});
  for (std::size_t m = 0; m < s.n_frames; ++m) {
    // Full spectrum energy from the one-sided bins (conjugate symmetry of a real frame).
    double spec = std::norm(s.at(m, 0)) + std::norm(s.at(m, N / 2));
    for (std::size_t k = 1; k < N / 2; ++k) spec += 2.0 * std::norm(s.at(m, k));
    double time = 0.0;
    for (std::size_t i = 0; i < N; ++i) time += x[m * N + i] * x[m * N + i];
    EXPECT_NEAR(spec / (static_cast<double>(N) * time), 1.0, 1e-9);
  }
}

TEST(Stft, ShiftByHopShiftsFrames) {
  const auto x = random_signal(600, 3);
  const StftConfig cfg{128, 32, WindowKind::Hann, 128};
  const auto a = stft(x, cfg);
  const auto b = stft(std::span<const double>(x).subspan(32), cfg);
  for (std::size_t m = 0; m < b.n_frames; ++m)
    for (std::size_t k = 0; k < b.n_bins; ++k) EXPECT_LE(std::abs(b.at(m, k) - a.at(m + 1, k)), 1e-12);
}

TEST(Stft, Errors) {
  const std::vector<double> x(100, 1.0);
  EXPECT_THROW(stft(x, StftConfig{128, 32, WindowKind::Hann, 128}), Error);
  EXPECT_THROW(stft(x, StftConfig{64, 80, WindowKind::Hann, 64}), Error);
  EXPECT_THROW(stft(x, StftConfig{64, 8, WindowKind::Hann, 32}), Error);
}

TEST(LogMagnitude, FloorUnityAndScaling) {
  Spectrogram s;
  s.values = {0.0, 1.0};
  const auto lm = log_magnitude(s);
  EXPECT_NEAR(lm[0], std::log(1e-10), 1e-12);
  EXPECT_NEAR(lm[1], 0.0, 1e-9);

  const auto x = random_signal(512, 4);
  std::vector<double> y(x);
  for (auto& v : y) v *= 5.0;
  const StftConfig cfg{128, 64, WindowKind::Hann, 128};
  const auto a = log_magnitude(stft(x, cfg)), b = log_magnitude(stft(y, cfg));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > -10.0) {
      EXPECT_NEAR(b[i] - a[i], std::log(5.0), 1e-6);
    }
  }
}
