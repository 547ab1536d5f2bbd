#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "ppgbp/dataset.hpp"
#include "ppgbp/error.hpp"

namespace ppgbp {

using Signal = std::vector<double>;

// ---------------------------------------------------------------------------
// Median filter
// ---------------------------------------------------------------------------

/// Centered running median; the edges replicate the boundary samples.
inline Signal median_filter(std::span<const double> signal, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) fail(ErrorCode::EvenKernel, "median kernel must be odd and >= 1");
  if (static_cast<std::size_t>(kernel) > signal.size()) {
    fail(ErrorCode::KernelTooLarge, "kernel " + std::to_string(kernel) + " exceeds signal length " +
                                        std::to_string(signal.size()));
  }
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  const std::ptrdiff_t half = kernel / 2;
  Signal out(signal.size());
  std::vector<double> window(static_cast<std::size_t>(kernel));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const auto j = std::clamp<std::ptrdiff_t>(i + k, 0, n - 1);
      window[static_cast<std::size_t>(k + half)] = signal[static_cast<std::size_t>(j)];
    }
    auto mid = window.begin() + half;
    std::nth_element(window.begin(), mid, window.end());
    out[static_cast<std::size_t>(i)] = *mid;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chebyshev type-II design
// ---------------------------------------------------------------------------

struct FilterDesign {
  int order = 4;
  double cutoff_hz = 25.0;  ///< stopband edge
  double stopband_attenuation_db = 10.0;
  double sample_rate_hz = kSampleRateHz;
};

/// Transfer function b(z)/a(z) with a[0] == 1, plus the z-plane roots it was
/// built from.
struct IirFilter {
  std::vector<double> b;
  std::vector<double> a;
  std::vector<std::complex<double>> zeros;
  std::vector<std::complex<double>> poles;
  FilterDesign design;

  int order() const { return static_cast<int>(a.size()) - 1; }

  bool is_stable() const {
    return std::all_of(poles.begin(), poles.end(),
                       [](const std::complex<double>& p) { return std::abs(p) < 1.0; });
  }
};

namespace detail {

inline std::vector<double> poly_from_roots(const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = std::move(next);
  }
  std::vector<double> out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](const auto& z) { return z.real(); });
  return out;
}

}  // namespace detail

/// Low-pass Chebyshev type-II filter. The analog prototype has its stopband
/// edge at 1 rad/s; it is scaled to the pre-warped cutoff and mapped with the
/// bilinear transform, so |H(cutoff)| equals 10^(-atten/20) exactly and the
/// stopband ripples never exceed that level.
inline IirFilter design_cheby2(int order, double cutoff_hz, double atten_db, double fs_hz) {
  if (order < 1 || !(atten_db > 0.0) || !(fs_hz > 0.0) || !(cutoff_hz > 0.0) ||
      !(cutoff_hz < fs_hz / 2.0)) {
    fail(ErrorCode::InvalidSpec, "need order >= 1, atten > 0 and 0 < cutoff < fs/2");
  }
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const int n = order;

  // Analog prototype (stopband edge at 1 rad/s).
  const double eps = 1.0 / std::sqrt(std::pow(10.0, 0.1 * atten_db) - 1.0);
  const double mu = std::asinh(1.0 / eps) / n;
  std::vector<cd> z_a, p_a;
  for (int m = -n + 1; m < n; m += 2) {
    const double theta = pi * m / (2.0 * n);
    const cd base = -std::exp(cd(0.0, theta));
    p_a.push_back(1.0 / cd(std::sinh(mu) * base.real(), std::cosh(mu) * base.imag()));
    if (m != 0) z_a.push_back(cd(0.0, 1.0 / std::sin(m * pi / (2.0 * n))));
  }
  cd k_a = 1.0;
  for (const auto& p : p_a) k_a *= -p;
  for (const auto& z : z_a) k_a /= -z;

  // Pre-warp and scale to the cutoff.
  const double fs2 = 2.0 * fs_hz;
  const double warped = fs2 * std::tan(pi * cutoff_hz / fs_hz);
  for (auto& z : z_a) z *= warped;
  for (auto& p : p_a) p *= warped;
  k_a *= std::pow(warped, static_cast<double>(p_a.size() - z_a.size()));

  // Bilinear transform.
  IirFilter f;
  cd num = 1.0, den = 1.0;
  for (const auto& z : z_a) {
    f.zeros.push_back((fs2 + z) / (fs2 - z));
    num *= fs2 - z;
  }
  for (const auto& p : p_a) {
    f.poles.push_back((fs2 + p) / (fs2 - p));
    den *= fs2 - p;
  }
  while (f.zeros.size() < f.poles.size()) f.zeros.push_back(-1.0);
  const double k = (k_a * num / den).real();

  f.b = detail::poly_from_roots(f.zeros);
  for (auto& c : f.b) c *= k;
  f.a = detail::poly_from_roots(f.poles);
  f.design = FilterDesign{order, cutoff_hz, atten_db, fs_hz};
  return f;
}

inline IirFilter design_cheby2(const FilterDesign& d) {
  return design_cheby2(d.order, d.cutoff_hz, d.stopband_attenuation_db, d.sample_rate_hz);
}

/// H(e^{jw}) at frequency f_hz.
inline std::complex<double> frequency_response(const IirFilter& filter, double f_hz) {
  const double w = 2.0 * std::numbers::pi * f_hz / filter.design.sample_rate_hz;
  const std::complex<double> zinv = std::polar(1.0, -w);
  auto eval = [&](const std::vector<double>& c) {
    std::complex<double> acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * zinv + *it;
    return acc;
  };
  return eval(filter.b) / eval(filter.a);
}

// ---------------------------------------------------------------------------
// Zero-phase filtering
// ---------------------------------------------------------------------------

namespace detail {

/// Direct-form II transposed, initial state zi * x[0].
inline Signal lfilter_scaled(const IirFilter& f, const Signal& x, const std::vector<double>& zi) {
  const std::size_t nz = f.a.size() - 1;
  std::vector<double> z(nz);
  for (std::size_t i = 0; i < nz; ++i) z[i] = zi[i] * x.front();
  Signal y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double xn = x[n];
    const double yn = f.b[0] * xn + (nz ? z[0] : 0.0);
    for (std::size_t i = 0; i + 1 < nz; ++i) z[i] = f.b[i + 1] * xn - f.a[i + 1] * yn + z[i + 1];
    if (nz) z[nz - 1] = f.b[nz] * xn - f.a[nz] * yn;
    y[n] = yn;
  }
  return y;
}

/// Steady-state filter state for a unit step input.
inline std::vector<double> lfilter_zi(const IirFilter& f) {
  const auto nz = static_cast<Eigen::Index>(f.a.size() - 1);
  if (nz == 0) return {};
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nz, nz);
  // I - companion(a)^T
  for (Eigen::Index i = 0; i < nz; ++i) m(i, 0) += f.a[static_cast<std::size_t>(i + 1)];
  for (Eigen::Index i = 0; i + 1 < nz; ++i) m(i, i + 1) -= 1.0;
  Eigen::VectorXd rhs(nz);
  for (Eigen::Index i = 0; i < nz; ++i) {
    const auto k = static_cast<std::size_t>(i + 1);
    rhs(i) = f.b[k] - f.a[k] * f.b[0];
  }
  Eigen::VectorXd zi = m.partialPivLu().solve(rhs);
  return {zi.data(), zi.data() + nz};
}

inline Signal reversed(Signal v) {
  std::reverse(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Forward-backward filtering with odd-reflection padding of 3*order samples
/// per side and steady-state initial conditions. The forward-then-backward
/// and backward-then-forward cascades are averaged, which makes the result
/// exactly equivariant under time reversal.
inline Signal filtfilt(const IirFilter& filter, std::span<const double> signal) {
  const auto pad = static_cast<std::size_t>(3 * filter.order());
  const std::size_t n = signal.size();
  if (n <= pad || n < 2) {
    fail(ErrorCode::SignalTooShort, "filtfilt needs more than " + std::to_string(pad) + " samples");
  }
  Signal ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const auto zi = detail::lfilter_zi(filter);
  auto pass = [&](const Signal& v) { return detail::lfilter_scaled(filter, v, zi); };
  using detail::reversed;
  const Signal fb = reversed(pass(reversed(pass(ext))));
  const Signal bf = pass(reversed(pass(reversed(ext))));

  Signal out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
  return out;
}

// ---------------------------------------------------------------------------
// Detrend / normalize / clip
// ---------------------------------------------------------------------------

/// Removes the least-squares line through (i, x[i]).
inline Signal detrend(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 2) fail(ErrorCode::TooShort, "detrend needs at least 2 samples");
  const double t_mean = 0.5 * static_cast<double>(n - 1);
  double x_mean = 0.0;
  for (double v : signal) x_mean += v;
  x_mean /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - t_mean;
    sxy += dt * (signal[i] - x_mean);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  Signal out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = signal[i] - x_mean - slope * (static_cast<double>(i) - t_mean);
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< population (divide-by-N)
};

inline MeanStd mean_std(std::span<const double> x) {
  MeanStd r;
  for (double v : x) r.mean += v;
  r.mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(x.size()));
  return r;
}

/// z-score with population standard deviation.
inline Signal normalize(std::span<const double> signal) {
  if (signal.size() < 2) fail(ErrorCode::TooShort, "normalize needs at least 2 samples");
  const auto [mean, sd] = mean_std(signal);
  double scale = 0.0;
  for (double v : signal) scale = std::max(scale, std::abs(v));
  if (!(sd > 1e-12 * std::max(1.0, scale))) fail(ErrorCode::ZeroVariance, "signal has zero variance");
  Signal out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) / sd;
  return out;
}

/// Winsorizes to mean +/- k standard deviations.
inline Signal clip_sigma(std::span<const double> signal, double k) {
  const auto [mean, sd] = mean_std(signal);
  Signal out(signal.begin(), signal.end());
  for (auto& v : out) v = std::clamp(v, mean - k * sd, mean + k * sd);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PreprocessConfig {
  int median_kernel = 3;
  FilterDesign filter{};
  bool detrend = true;    ///< linear
  bool normalize = true;  ///< z-score
  std::optional<double> clip_sigma;  ///< disabled by default

  bool operator==(const PreprocessConfig& o) const {
    return median_kernel == o.median_kernel && filter.order == o.filter.order &&
           filter.cutoff_hz == o.filter.cutoff_hz &&
           filter.stopband_attenuation_db == o.filter.stopband_attenuation_db &&
           filter.sample_rate_hz == o.filter.sample_rate_hz && detrend == o.detrend &&
           normalize == o.normalize && clip_sigma == o.clip_sigma;
  }
};

/// Holds the designed filter so a corpus is conditioned with one design.
class Preprocessor {
 public:
  explicit Preprocessor(PreprocessConfig config = {})
      : config_(config), filter_(design_cheby2(config.filter)) {
    if (config_.median_kernel < 1 || config_.median_kernel % 2 == 0) {
      fail(ErrorCode::EvenKernel, "median kernel must be odd and >= 1");
    }
  }

  const PreprocessConfig& config() const { return config_; }
  const IirFilter& filter() const { return filter_; }

  /// median -> filtfilt(cheby2) -> detrend -> normalize [-> clip]
  Signal apply(std::span<const double> raw) const {
    Signal x = median_filter(raw, config_.median_kernel);
    x = filtfilt(filter_, x);
    if (config_.detrend) x = detrend(x);
    if (config_.normalize) x = normalize(x);
    if (config_.clip_sigma) x = clip_sigma(x, *config_.clip_sigma);
    return x;
  }

  PpgSegment apply(const PpgSegment& raw) const {
    return PpgSegment{apply(std::span<const double>(raw.samples)), raw.sample_rate_hz, raw.record};
  }

 private:
  PreprocessConfig config_;
  IirFilter filter_;
};

inline PpgSegment preprocess_pipeline(const PpgSegment& raw, const PreprocessConfig& config) {
  return Preprocessor(config).apply(raw);
}

}  // namespace ppgbp
