#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ppgbp/classifiers/svm.hpp"
#include "ppgbp/nn/model_io.hpp"
#include "ppgbp/nn/train.hpp"

using namespace ppgbp;
using namespace ppgbp::nn;

namespace {

/// Two classes of noisy sinusoids at clearly different frequencies.
std::vector<Example> sine_classes(std::size_t n, std::uint64_t seed, std::size_t len = 40) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double freq = label == 0 ? 1.0 : 4.0;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Tensor x({1, len});
    for (std::size_t t = 0; t < len; ++t) {
      x.data[t] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(len) + phase) +
                  0.1 * rng.normal();
    }
    out.push_back({"s" + std::to_string(i), std::move(x), label});
  }
  return out;
}

ModelSpec small_cnn(std::size_t len = 40) {
  return {"small", {1, len},
          {LayerSpec::conv1d(4, 5), LayerSpec::act(ActivationKind::Relu), LayerSpec::maxpool(2),
           LayerSpec::conv1d(4, 3), LayerSpec::act(ActivationKind::Relu), LayerSpec::flatten(),
           LayerSpec::dense(8, ActivationKind::Relu), LayerSpec::dense(2), LayerSpec::act(ActivationKind::Softmax)}};
}

double accuracy(Model& m, const std::vector<Example>& data) {
  std::size_t ok = 0;
  for (const auto& e : data) {
    Tensor x({1, e.input.shape[0], e.input.shape[1]}, e.input.data);
    const auto p = m.predict_proba(x)[0];
    ok += (p[1] > p[0] ? 1 : 0) == e.label ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace

TEST(Adam, TwoScalarStepsMatchHandValues) {
  AdamConfig hyper;
  AdamState st;
  std::vector<double> p{1.0};
  const double g1 = 0.5, g2 = -0.2;
  adam_step(st, p, std::vector<double>{g1}, hyper);
  double m = 0.1 * g1, v = 0.001 * g1 * g1;
  double want = 1.0 - 1e-3 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  EXPECT_NEAR(p[0], want, 1e-12);
  adam_step(st, p, std::vector<double>{g2}, hyper);
  m = 0.9 * m + 0.1 * g2;
  v = 0.999 * v + 0.001 * g2 * g2;
  want -= 1e-3 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  EXPECT_NEAR(p[0], want, 1e-12);
  EXPECT_NEAR(st.m[0], m, 1e-12);
  EXPECT_NEAR(st.v[0], v, 1e-12);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState st;
  std::vector<double> p{0.3, -2.0};
  adam_step(st, p, std::vector<double>{0.0, 0.0}, {});
  EXPECT_EQ(p, (std::vector<double>{0.3, -2.0}));
}

TEST(Adam, FirstStepIsSignTimesRate) {
  AdamState st;
  std::vector<double> p{0.0, 0.0};
  adam_step(st, p, std::vector<double>{5.0, -3.0}, {});
  EXPECT_NEAR(p[0], -1e-3, 1e-10);
  EXPECT_NEAR(p[1], 1e-3, 1e-10);
}

TEST(Train, SeparableSinesReachHighAccuracy) {
  const auto data = sine_classes(120, 1);
  auto cfg = TrainConfig::for_batch_size(16, 3);
  cfg.max_epochs = 60;
  auto tm = train(small_cnn(), data, cfg);
  EXPECT_GE(accuracy(tm.model, data), 0.99);
  EXPECT_EQ(tm.fitted_ids.size(), data.size());
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto data = sine_classes(40, 2);
  auto cfg = TrainConfig::for_batch_size(16, 9);
  cfg.max_epochs = 5;
  auto a = train(small_cnn(), data, cfg);
  auto b = train(small_cnn(), data, cfg);
  const auto sa = a.model.state(), sb = b.model.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].second->data, sb[i].second->data);
}

TEST(Train, StopsEarlyWhenValidationStalls) {
  // Labels independent of inputs: validation loss cannot keep improving.
  auto data = sine_classes(60, 3);
  Rng rng(5);
  for (auto& e : data) e.label = static_cast<int>(rng.below(2));
  data[0].label = 0;
  data[1].label = 1;
  auto cfg = TrainConfig::for_batch_size(16, 1);
  cfg.max_epochs = 200;
  auto tm = train(small_cnn(), data, cfg);
  EXPECT_TRUE(tm.stopped_early);
  EXPECT_LT(static_cast<int>(tm.history.size()), cfg.max_epochs);
  EXPECT_EQ(static_cast<int>(tm.history.size()), tm.best_epoch + cfg.early_stop.patience);
}

TEST(Train, EpochBudgetFollowsBatchSize) {
  EXPECT_EQ(TrainConfig::for_batch_size(16, 0).max_epochs, 100);
  EXPECT_EQ(TrainConfig::for_batch_size(3, 0).max_epochs, 300);
}

TEST(Train, RejectsSingleClassData) {
  auto data = sine_classes(10, 4);
  for (auto& e : data) e.label = 1;
  EXPECT_THROW(train(small_cnn(), data, TrainConfig{}), Error);
  try {
    train(small_cnn(), data, TrainConfig{});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateLabels);
  }
}

TEST(ExtractFeatures, WidthAndDeterminism) {
  const auto data = sine_classes(20, 6);
  auto cfg = TrainConfig::for_batch_size(16, 1);
  cfg.max_epochs = 3;
  auto tm = train(small_cnn(), data, cfg);
  const auto f1 = extract_features(tm.model, data[0].input);
  const auto f2 = extract_features(tm.model, data[0].input);
  EXPECT_EQ(f1.size(), 8u);
  EXPECT_EQ(f1.size(), tm.model.feature_width());
  EXPECT_EQ(f1, f2);
}

TEST(ExtractFeatures, LinearProbeMatchesSoftmaxAccuracy) {
  const auto data = sine_classes(100, 7);
  auto cfg = TrainConfig::for_batch_size(16, 2);
  cfg.max_epochs = 40;
  auto tm = train(small_cnn(), data, cfg);
  const double softmax_acc = accuracy(tm.model, data);
  std::vector<const Tensor*> in;
  std::vector<int> y;
  for (const auto& e : data) {
    in.push_back(&e.input);
    y.push_back(e.label == 1 ? 1 : -1);
  }
  const auto feats = extract_features(tm.model, in);
  SvmConfig sc;
  sc.kernel.kind = KernelKind::Linear;
  sc.C = 10.0;
  const auto svm = svm_fit(feats, y, sc);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) ok += svm_predict(svm, feats[i]).label == y[i] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(ok) / static_cast<double>(feats.size()), softmax_acc, 0.05);
}

TEST(ModelIo, JsonRoundTripIsExact) {
  const auto data = sine_classes(30, 8);
  auto cfg = TrainConfig::for_batch_size(16, 4);
  cfg.max_epochs = 2;
  ModelSpec spec = small_cnn();
  spec.layers.insert(spec.layers.begin() + 1, LayerSpec::batchnorm());
  auto tm = train(spec, data, cfg);
  const auto j = to_json(tm.model);
  auto back = model_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.spec(), tm.model.spec());
  const auto sa = tm.model.state(), sb = back.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].second->data, sb[i].second->data) << sa[i].first;
  EXPECT_EQ(to_json(back).dump(), j.dump());
}
