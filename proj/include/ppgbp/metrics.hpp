#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppgbp/dataset.hpp"
#include "ppgbp/error.hpp"

namespace ppgbp {

namespace detail {
__extension__ using Int128 = __int128;
}  // namespace detail

/// Non-negative exact fraction in lowest terms with a positive denominator.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Ratio make(std::int64_t n, std::int64_t d) {
    if (d <= 0 || n < 0) fail(ErrorCode::ConfigError, "ratio needs n >= 0, d > 0");
    const auto g = std::gcd(n, d);
    return {n / g, d / g};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Ratio&) const = default;
  auto operator<=>(const Ratio& o) const { return static_cast<detail::Int128>(num) * o.den <=> static_cast<detail::Int128>(o.num) * den; }
};

/// Undefined (zero denominator) metrics are empty.
using Metric = std::optional<Ratio>;

inline Metric safe_ratio(std::int64_t n, std::int64_t d) {
  if (d == 0) return std::nullopt;
  return Ratio::make(n, d);
}

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  BinaryClass positive_class = BinaryClass::Hypertension;

  std::int64_t total() const { return tp + fp + fn + tn; }
  /// Same counts viewed with the other class as positive.
  ConfusionMatrix swapped() const { return {tn, fn, fp, tp, other(positive_class)}; }
  bool operator==(const ConfusionMatrix&) const = default;

  static BinaryClass other(BinaryClass c) {
    return c == BinaryClass::Hypertension ? BinaryClass::PreHypertension : BinaryClass::Hypertension;
  }
};

struct MetricsReport {
  BinaryClass positive_class = BinaryClass::Hypertension;
  Metric precision, recall, f1, specificity, accuracy;
  bool operator==(const MetricsReport&) const = default;
};

inline ConfusionMatrix confusion(std::span<const BinaryClass> predictions, std::span<const BinaryClass> labels,
                                 BinaryClass positive_class) {
  if (predictions.size() != labels.size()) fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  if (labels.empty()) fail(ErrorCode::Empty, "no samples to evaluate");
  ConfusionMatrix cm;
  cm.positive_class = positive_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_class;
    const bool true_pos = labels[i] == positive_class;
    if (pred_pos && true_pos) ++cm.tp;
    else if (pred_pos) ++cm.fp;
    else if (true_pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

/// Precision tp/(tp+fp), recall tp/(tp+fn), F1 as the harmonic mean of the
/// two (2tp/(2tp+fp+fn) in exact form), specificity tn/(tn+fp), accuracy
/// (tp+tn)/total. F1 is undefined whenever P or R is, or when P + R = 0.
inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.fn < 0 || cm.tn < 0) fail(ErrorCode::ConfigError, "negative confusion count");
  if (cm.total() == 0) fail(ErrorCode::Empty, "confusion matrix is empty");
  MetricsReport r;
  r.positive_class = cm.positive_class;
  r.precision = safe_ratio(cm.tp, cm.tp + cm.fp);
  r.recall = safe_ratio(cm.tp, cm.tp + cm.fn);
  if (r.precision && r.recall && cm.tp > 0) r.f1 = Ratio::make(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  r.specificity = safe_ratio(cm.tn, cm.tn + cm.fp);
  r.accuracy = safe_ratio(cm.tp + cm.tn, cm.total());
  return r;
}

namespace detail {

/// round-half-even(num * scale / den) using integer arithmetic.
inline std::int64_t round_half_even(std::int64_t num, std::int64_t den, std::int64_t scale) {
  const Int128 n = static_cast<Int128>(num) * scale;
  Int128 q = n / den;
  const Int128 r = n % den;
  if (2 * r > den || (2 * r == den && q % 2 == 1)) ++q;
  return static_cast<std::int64_t>(q);
}

inline std::string fixed(std::int64_t scaled, int decimals) {
  std::int64_t pow10 = 1;
  for (int i = 0; i < decimals; ++i) pow10 *= 10;
  std::string frac = std::to_string(scaled % pow10);
  frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
  return std::to_string(scaled / pow10) + "." + frac;
}

}  // namespace detail

inline constexpr const char* kUndefined = "n/a";

/// Percent to one decimal, round-half-even: 0.71875 -> "71.9".
inline std::string format_percent(const Metric& m) {
  if (!m) return kUndefined;
  return detail::fixed(detail::round_half_even(m->num, m->den, 1000), 1);
}

/// Fraction to four decimals, round-half-even: 2/3 -> "0.6667".
inline std::string format_fraction(const Metric& m) {
  if (!m) return kUndefined;
  return detail::fixed(detail::round_half_even(m->num, m->den, 10000), 4);
}

}  // namespace ppgbp
