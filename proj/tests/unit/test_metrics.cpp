#include <gtest/gtest.h>

#include "ppgbp/metrics.hpp"
#include "ppgbp/rng.hpp"

using namespace ppgbp;

namespace {

using BC = BinaryClass;

/// a/b == c/d by cross-multiplication.
bool same(const Metric& m, std::int64_t num, std::int64_t den) {
  if (!m) return false;
  return static_cast<detail::Int128>(m->num) * den == static_cast<detail::Int128>(num) * m->den;
}

ConfusionMatrix cm_of(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
  ConfusionMatrix cm;
  cm.tp = tp;
  cm.fp = fp;
  cm.fn = fn;
  cm.tn = tn;
  return cm;
}

}  // namespace

TEST(Confusion, PerfectAndAntiClassifier) {
  std::vector<BC> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(i < 6 ? BC::Hypertension : BC::PreHypertension);
  auto cm = confusion(labels, labels, BC::Hypertension);
  EXPECT_EQ(cm.tp, 6);
  EXPECT_EQ(cm.tn, 4);
  EXPECT_EQ(cm.fp + cm.fn, 0);
  std::vector<BC> anti;
  for (auto l : labels) anti.push_back(ConfusionMatrix::other(l));
  cm = confusion(anti, labels, BC::Hypertension);
  EXPECT_EQ(cm.tp + cm.tn, 0);
}

TEST(Confusion, SwappingPositiveClassSwapsCounts) {
  Rng rng(1);
  std::vector<BC> p, l;
  for (int i = 0; i < 40; ++i) {
    p.push_back(rng.below(2) ? BC::Hypertension : BC::PreHypertension);
    l.push_back(rng.below(2) ? BC::Hypertension : BC::PreHypertension);
  }
  const auto a = confusion(p, l, BC::Hypertension);
  const auto b = confusion(p, l, BC::PreHypertension);
  EXPECT_EQ(a.tp, b.tn);
  EXPECT_EQ(a.tn, b.tp);
  EXPECT_EQ(a.fp, b.fn);
  EXPECT_EQ(a.fn, b.fp);
  EXPECT_EQ(a.swapped(), b);
}

TEST(Confusion, Errors) {
  const std::vector<BC> one{BC::Hypertension}, none;
  EXPECT_THROW(confusion(one, none, BC::Hypertension), Error);
  EXPECT_THROW(confusion(none, none, BC::Hypertension), Error);
}

TEST(Metrics, HandExample) {
  const auto r = compute_metrics(cm_of(3, 1, 2, 4));
  EXPECT_TRUE(same(r.precision, 3, 4));
  EXPECT_TRUE(same(r.recall, 3, 5));
  EXPECT_TRUE(same(r.f1, 2, 3));
  EXPECT_TRUE(same(r.specificity, 4, 5));
  EXPECT_TRUE(same(r.accuracy, 7, 10));
  EXPECT_EQ(format_fraction(r.f1), "0.6667");
  EXPECT_EQ(format_percent(r.precision), "75.0");
}

TEST(Metrics, PerfectCase) {
  const auto r = compute_metrics(cm_of(5, 0, 0, 5));
  for (const auto* m : {&r.precision, &r.recall, &r.f1, &r.specificity, &r.accuracy}) EXPECT_TRUE(same(*m, 1, 1));
}

TEST(Metrics, ZeroDenominatorsAreUndefined) {
  const auto r = compute_metrics(cm_of(0, 0, 3, 7));
  EXPECT_FALSE(r.precision);
  EXPECT_FALSE(r.f1);
  EXPECT_TRUE(same(r.accuracy, 7, 10));
  EXPECT_EQ(format_percent(r.precision), "n/a");
}

TEST(Metrics, RandomTuplesMatchHandFormulasAndIdentities) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tp = static_cast<std::int64_t>(rng.below(30)), fp = static_cast<std::int64_t>(rng.below(30));
    const auto fn = static_cast<std::int64_t>(rng.below(30)), tn = static_cast<std::int64_t>(rng.below(30)) + 1;
    const auto cm = cm_of(tp, fp, fn, tn);
    const auto r = compute_metrics(cm);
    const std::int64_t total = tp + fp + fn + tn;

    EXPECT_EQ(tp + fp > 0, same(r.precision, tp, tp + fp));
    EXPECT_EQ(tp + fp > 0, r.precision.has_value());
    EXPECT_EQ(tp + fn > 0, same(r.recall, tp, tp + fn));
    EXPECT_EQ(tp + fn > 0, r.recall.has_value());
    EXPECT_TRUE(same(r.specificity, tn, tn + fp));
    EXPECT_TRUE(same(r.accuracy, tp + tn, total));

    if (r.precision && r.recall && tp > 0) {
      // F1 = 2PR / (P + R) on the rationals themselves.
      const auto P = *r.precision, R = *r.recall;
      ASSERT_TRUE(r.f1);
      EXPECT_EQ(static_cast<detail::Int128>(r.f1->num) * (P.num * R.den + R.num * P.den),
                static_cast<detail::Int128>(r.f1->den) * 2 * P.num * R.num);
      EXPECT_LE(std::min(P, R), *r.f1);
      EXPECT_LE(*r.f1, std::max(P, R));
    } else {
      EXPECT_FALSE(r.f1);
    }

    const auto s = compute_metrics(cm.swapped());
    EXPECT_EQ(s.accuracy, r.accuracy);
    if (tp + fn > 0) {
      EXPECT_EQ(r.recall, s.specificity);
    }
    // precision under the other class is the negative predictive value tn / (tn + fn)
    EXPECT_TRUE(same(s.precision, tn, tn + fn));
  }
}

TEST(Metrics, RoundHalfEven) {
  EXPECT_EQ(format_percent(Ratio::make(1, 8)), "12.5");      // exact
  EXPECT_EQ(format_percent(Ratio::make(1, 16)), "6.2");      // 6.25 -> 6.2
  EXPECT_EQ(format_percent(Ratio::make(3, 16)), "18.8");     // 18.75 -> 18.8
  EXPECT_EQ(format_fraction(Ratio::make(1, 32)), "0.0312");  // 0.03125 -> 0.0312
  EXPECT_EQ(format_fraction(Ratio::make(1, 1)), "1.0000");
}
