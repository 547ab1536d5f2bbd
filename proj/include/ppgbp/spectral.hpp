#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "ppgbp/error.hpp"

namespace ppgbp {

enum class WindowKind { Hann, Rectangular };

constexpr std::string_view to_string(WindowKind w) {
  return w == WindowKind::Hann ? "hann" : "rectangular";
}

/// Periodic Hann (w[n] = 0.5(1 - cos(2 pi n / N))) or all-ones.
inline std::vector<double> make_window(WindowKind kind, int length) {
  if (length < 2) fail(ErrorCode::InvalidLength, "window length must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(length), 1.0);
  if (kind == WindowKind::Hann) {
    for (int n = 0; n < length; ++n) {
      w[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / length));
    }
  }
  return w;
}

/// In-place DFT, X[k] = sum_n x[n] e^{-j 2 pi k n / N}. Radix-2 when N is a
/// power of two, direct summation otherwise.
inline void dft_inplace(std::vector<std::complex<double>>& x) {
  using cd = std::complex<double>;
  const std::size_t n = x.size();
  if (n <= 1) return;
  if ((n & (n - 1)) != 0) {
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      cd acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) /
                                          static_cast<double>(n));
      }
      out[k] = acc;
    }
    x = std::move(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cd w = std::polar(1.0, ang * static_cast<double>(k));
        const cd u = x[i + k];
        const cd v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

struct StftConfig {
  int window_length = 256;
  int hop = 64;
  WindowKind window = WindowKind::Hann;
  int fft_length = 256;

  void validate() const {
    if (!(1 <= hop && hop <= window_length && window_length <= fft_length)) {
      fail(ErrorCode::InvalidSpec, "STFT requires 1 <= hop <= window_length <= fft_length");
    }
  }
  bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
  std::vector<std::complex<double>> values;  ///< frame-major, n_frames x n_bins
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  StftConfig config;
  double sample_rate_hz = 0.0;

  std::complex<double> at(std::size_t frame, std::size_t bin) const {
    return values[frame * n_bins + bin];
  }
  double bin_frequency_hz(std::size_t bin) const {
    return sample_rate_hz * static_cast<double>(bin) / config.fft_length;
  }
};

inline std::size_t stft_frame_count(std::size_t signal_length, const StftConfig& c) {
  return (signal_length - static_cast<std::size_t>(c.window_length)) /
             static_cast<std::size_t>(c.hop) + 1;
}

/// Frame m covers samples [mL, mL + N); it is windowed, zero-padded to
/// fft_length and transformed with the frame-local time index, so a shift of
/// the input by L samples shifts the frames by one exactly. One-sided bins.
inline Spectrogram stft(std::span<const double> signal, const StftConfig& config,
                        double sample_rate_hz = 1000.0) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.window_length);
  if (signal.size() < n) fail(ErrorCode::SignalTooShort, "signal shorter than the STFT window");
  const auto window = make_window(config.window, config.window_length);
  Spectrogram s;
  s.config = config;
  s.sample_rate_hz = sample_rate_hz;
  s.n_frames = stft_frame_count(signal.size(), config);
  s.n_bins = static_cast<std::size_t>(config.fft_length) / 2 + 1;
  s.values.resize(s.n_frames * s.n_bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(config.fft_length));
  for (std::size_t m = 0; m < s.n_frames; ++m) {
    const std::size_t start = m * static_cast<std::size_t>(config.hop);
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) buf[i] = signal[start + i] * window[i];
    dft_inplace(buf);
    std::copy_n(buf.begin(), s.n_bins, s.values.begin() + static_cast<std::ptrdiff_t>(m * s.n_bins));
  }
  return s;
}

inline constexpr double kLogFloor = 1e-10;

/// ln(|X| + 1e-10), frame-major n_frames x n_bins.
inline std::vector<double> log_magnitude(const Spectrogram& s) {
  std::vector<double> out(s.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::abs(s.values[i]) + kLogFloor);
  return out;
}

/// Plot-ready dump: header row of bin frequencies, one row per frame.
inline void write_spectrogram_csv(std::ostream& os, const Spectrogram& s) {
  const auto lm = log_magnitude(s);
  os << "frame";
  for (std::size_t k = 0; k < s.n_bins; ++k) os << ",hz_" << s.bin_frequency_hz(k);
  os << '\n';
  os.precision(10);
  for (std::size_t m = 0; m < s.n_frames; ++m) {
    os << m;
    for (std::size_t k = 0; k < s.n_bins; ++k) os << ',' << lm[m * s.n_bins + k];
    os << '\n';
  }
}

}  // namespace ppgbp
