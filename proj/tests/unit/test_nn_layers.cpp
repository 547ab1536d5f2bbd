#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ppgbp/nn/architectures.hpp"
#include "ppgbp/nn/layers.hpp"
#include "ppgbp/nn/lstm.hpp"
#include "ppgbp/nn/model.hpp"

using namespace ppgbp;
using namespace ppgbp::nn;
using ppgbp::testsupport::check_layer;
using ppgbp::testsupport::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

Tensor naive_conv(const Tensor& x, const ConvSpec& s, const Tensor& w, const Tensor& b) {
  const std::size_t n_out = s.n_out();
  Tensor out({s.out_channels, n_out});
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t t = 0; t < n_out; ++t) {
      double acc = b.data[o];
      for (std::size_t c = 0; c < s.in_channels; ++c)
        for (int k = 0; k < s.kernel; ++k) {
          const long pos = static_cast<long>(t) * s.stride + k - s.padding;
          if (pos < 0 || pos >= static_cast<long>(s.n_in)) continue;
          acc += w.data[(o * s.in_channels + c) * static_cast<std::size_t>(s.kernel) + static_cast<std::size_t>(k)] *
                 x.data[c * s.n_in + static_cast<std::size_t>(pos)];
        }
      out.data[o * n_out + t] = acc;
    }
  return out;
}

}  // namespace

TEST(ConvOutputLen, HandValues) {
  EXPECT_EQ(conv_output_len(2100, 0, 3, 1), 2098u);
  EXPECT_EQ(conv_output_len(5, 0, 5, 1), 1u);
  EXPECT_EQ(conv_output_len(10, 1, 3, 2), 6u);
  EXPECT_THROW(conv_output_len(4, 0, 5, 1), Error);
}

TEST(Conv1d, HandExample) {
  ConvSpec s{3, 1, 0, 1, 1, 5};
  const Tensor x({1, 5}, {0, 1, 2, 3, 4});
  const auto y = conv1d_forward(x, s, Tensor({1, 1, 3}, {1, 0, -1}), Tensor({1}, {0.0}));
  EXPECT_EQ(y.data, (Buffer{-2, -2, -2}));
}

TEST(Conv1d, IdentityKernel) {
  ConvSpec s{1, 1, 0, 1, 1, 4};
  const Tensor x({1, 4}, {3, -1, 2, 7});
  EXPECT_EQ(conv1d_forward(x, s, Tensor({1, 1, 1}, {1.0}), Tensor({1}, {0.0})).data, x.data);
}

TEST(Conv1d, MatchesTripleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    ConvSpec s;
    s.kernel = 1 + static_cast<int>(rng.below(5));
    s.stride = 1 + static_cast<int>(rng.below(3));
    s.padding = static_cast<int>(rng.below(3));
    s.in_channels = 1 + rng.below(3);
    s.out_channels = 1 + rng.below(4);
    s.n_in = static_cast<std::size_t>(s.kernel) + rng.below(12);
    const auto x = random_tensor({s.in_channels, s.n_in}, rng);
    const auto w = random_tensor({s.out_channels, s.in_channels, static_cast<std::size_t>(s.kernel)}, rng);
    const auto b = random_tensor({s.out_channels}, rng);
    const auto got = conv1d_forward(x, s, w, b);
    const auto want = naive_conv(x, s, w, b);
    ASSERT_EQ(got.shape, want.shape);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data[i], want.data[i], 1e-9);
  }
}

TEST(BatchNorm, HandExamples) {
  const Tensor x({2, 1, 1}, {1.0, 3.0});
  const std::vector<double> g1{1.0}, b0{0.0}, g2{2.0}, b1{1.0};
  auto r = batchnorm_forward(x, g1, b0, 1e-5);
  EXPECT_NEAR(r.y.data[0], -1.0, 1e-4);
  EXPECT_NEAR(r.y.data[1], 1.0, 1e-4);
  EXPECT_DOUBLE_EQ(r.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(r.var[0], 1.0);
  r = batchnorm_forward(x, g2, b1, 1e-5);
  EXPECT_NEAR(r.y.data[0], -1.0, 1e-4);
  EXPECT_NEAR(r.y.data[1], 3.0, 1e-4);

  const Tensor c({3, 1, 2}, 4.0);
  for (double v : batchnorm_forward(c, g1, b0, 1e-5).y.data) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(batchnorm_forward(Tensor({1, 1, 1}, 1.0), g1, b0, 1e-5), Error);
}

TEST(BatchNorm, InferenceUsesRunningStatistics) {
  BatchNormLayer bn({1, 1}, LayerSpec::batchnorm());
  bn.forward(Tensor({2, 1, 1}, {1.0, 3.0}), Mode::Train);
  // running = 0.9 * (0, 1) + 0.1 * (2, 1)
  const auto y = bn.forward(Tensor({1, 1, 1}, {0.2}), Mode::Infer);
  EXPECT_NEAR(y.data[0], 0.0, 1e-12);
}

TEST(Pool, HandExamples) {
  EXPECT_EQ(pool_forward(Tensor({1, 3}, {1, 5, 3}), PoolKind::Max, 3).data, Buffer{5});
  EXPECT_EQ(pool_forward(Tensor({1, 3}, {2, 4, 6}), PoolKind::GlobalAvg).data, Buffer{4});
  EXPECT_EQ(pool_forward(Tensor({1, 4}, {1, 2, 3, 4}), PoolKind::Max, 2, 2).data, (Buffer{2, 4}));
  EXPECT_THROW(pool_forward(Tensor({1, 2}, {1, 2}), PoolKind::Max, 3), Error);
}

TEST(Dense, ParamCount) {
  Rng rng(1);
  EXPECT_EQ(DenseLayer({1, 1}, LayerSpec::dense(1), rng).param_count(), 2);
  EXPECT_EQ(DenseLayer({128, 1}, LayerSpec::dense(2), rng).param_count(), 258);
  EXPECT_EQ(DenseLayer({64, 1}, LayerSpec::dense(32), rng).param_count(), 2080);
}

TEST(Activations, SoftmaxCrossEntropyExamples) {
  const std::vector<double> z0{0.0, 0.0}, z1{30.0, 0.0};
  const auto a = softmax_cross_entropy(z0, 0);
  EXPECT_NEAR(a.probabilities[0], 0.5, 1e-15);
  EXPECT_NEAR(a.loss, std::log(2.0), 1e-12);
  EXPECT_LE(softmax_cross_entropy(z1, 0).loss, 1e-9);
}

// ---------------------------------------------------------------------------
// Finite-difference checks, >= 20 random shapes per layer type
// ---------------------------------------------------------------------------

class GradientCheck : public ::testing::TestWithParam<int> {
 protected:
  Rng rng{static_cast<std::uint64_t>(1000 + GetParam())};
  std::size_t pick(std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }
};

TEST_P(GradientCheck, Conv1d) {
  const FeatureShape in{pick(1, 3), pick(6, 14)};
  const auto spec = LayerSpec::conv1d(static_cast<int>(pick(1, 4)), static_cast<int>(pick(1, 5)),
                                      static_cast<int>(pick(1, 3)), static_cast<int>(pick(0, 2)));
  Conv1dLayer layer(in, spec, rng);
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, BatchNorm) {
  const FeatureShape in{pick(1, 3), pick(1, 6)};
  BatchNormLayer layer(in, LayerSpec::batchnorm());
  for (auto* p : layer.params())
    for (auto& v : p->value.data) v = rng.uniform(0.5, 1.5);
  const auto r = check_layer(layer, random_tensor({pick(2, 4), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, MaxPool) {
  const FeatureShape in{pick(1, 3), pick(4, 12)};
  const int window = static_cast<int>(pick(1, 3));
  MaxPoolLayer layer(in, LayerSpec::maxpool(window, static_cast<int>(pick(1, 3))));
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, GlobalAvgPool) {
  const FeatureShape in{pick(1, 4), pick(1, 9)};
  GlobalAvgPoolLayer layer(in);
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, Dense) {
  const FeatureShape in{pick(1, 8), 1};
  const ActivationKind acts[] = {ActivationKind::None, ActivationKind::Relu, ActivationKind::Tanh,
                                 ActivationKind::Sigmoid};
  DenseLayer layer(in, LayerSpec::dense(static_cast<int>(pick(1, 6)), acts[GetParam() % 4]), rng);
  const auto r = check_layer(layer, random_tensor({pick(1, 4), in.channels, 1}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, DropoutReplay) {
  const FeatureShape in{pick(1, 4), pick(1, 8)};
  DropoutLayer layer(in, rng.uniform(0.1, 0.6), derive_seed(7, static_cast<std::uint64_t>(GetParam())));
  layer.set_replay(true);
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, Lstm) {
  const FeatureShape in{pick(1, 3), pick(1, 5)};
  LstmLayer layer(in, LayerSpec::lstm(static_cast<int>(pick(1, 4)), GetParam() % 2 == 0), rng);
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, BiLstm) {
  const FeatureShape in{pick(1, 3), pick(1, 5)};
  BiLstmLayer layer(in, LayerSpec::bilstm(static_cast<int>(pick(1, 3)), GetParam() % 2 == 0), rng);
  const auto r = check_layer(layer, random_tensor({pick(1, 3), in.channels, in.length}, rng), rng);
  EXPECT_LE(r.max_rel, kGradTol);
}

TEST_P(GradientCheck, SoftmaxCrossEntropy) {
  const std::size_t bsz = pick(1, 5);
  auto logits = random_tensor({bsz, 2, 1}, rng, 3.0);
  std::vector<int> labels(bsz);
  for (auto& l : labels) l = static_cast<int>(rng.below(2));
  const auto analytic = batch_cross_entropy(logits, labels);
  const double h = 1e-5;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits.data[i];
    logits.data[i] = v + h;
    const double lp = batch_cross_entropy(logits, labels).loss;
    logits.data[i] = v - h;
    const double lm = batch_cross_entropy(logits, labels).loss;
    logits.data[i] = v;
    EXPECT_NEAR(analytic.grad.data[i], (lp - lm) / (2 * h), 1e-6);
    const std::size_t b = i / 2, k = i % 2;
    const double onehot = static_cast<int>(k) == labels[b] ? 1.0 : 0.0;
    EXPECT_NEAR(analytic.grad.data[i] * static_cast<double>(bsz), analytic.probabilities[b][k] - onehot, 1e-15);
  }
}

TEST_P(GradientCheck, WholeSmallModel) {
  ModelSpec spec{"mini", {1, 12},
                 {LayerSpec::conv1d(3, 3), LayerSpec::batchnorm(), LayerSpec::act(ActivationKind::Tanh),
                  LayerSpec::maxpool(2), LayerSpec::lstm(3, true), LayerSpec::global_avg_pool(),
                  LayerSpec::flatten(), LayerSpec::dropout(0.3), LayerSpec::dense(4, ActivationKind::Tanh),
                  LayerSpec::dense(2), LayerSpec::act(ActivationKind::Softmax)}};
  Model model(spec, static_cast<std::uint64_t>(GetParam()));
  const std::size_t bsz = pick(2, 4);
  std::vector<int> labels(bsz);
  for (auto& l : labels) l = static_cast<int>(rng.below(2));
  const auto r = testsupport::check_model(model, random_tensor({bsz, 1, 12}, rng), labels);
  EXPECT_LE(r.max_rel, kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Range(0, 20));

TEST(Backward, DuplicatedBatchGivesSameGradients) {
  ModelSpec spec{"d", {3, 1}, {LayerSpec::flatten(), LayerSpec::dense(4, ActivationKind::Relu), LayerSpec::dense(2)}};
  Model a(spec, 5), b(spec, 5);
  Rng rng(3);
  const auto x = random_tensor({1, 3, 1}, rng);
  Tensor xx({2, 3, 1});
  std::copy(x.data.begin(), x.data.end(), xx.data.begin());
  std::copy(x.data.begin(), x.data.end(), xx.data.begin() + 3);
  const std::vector<int> l1{1}, l2{1, 1};
  a.zero_grad();
  a.backward(batch_cross_entropy(a.forward(x, Mode::Train), l1).grad);
  b.zero_grad();
  b.backward(batch_cross_entropy(b.forward(xx, Mode::Train), l2).grad);
  const auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->grad.size(); ++j) EXPECT_NEAR(pa[i]->grad.data[j], pb[i]->grad.data[j], 1e-14);
}

TEST(Backward, SaturatedPredictionHasTinyGradients) {
  ModelSpec spec{"s", {2, 1}, {LayerSpec::flatten(), LayerSpec::dense(2)}};
  Model m(spec, 1);
  auto& w = m.params()[0]->value.data;
  std::fill(w.begin(), w.end(), 0.0);
  w[0] = 40.0;  // class 0 logit = 40 * x0
  m.zero_grad();
  const Tensor x({1, 2, 1}, {1.0, 0.0});
  const std::vector<int> label{0};
  m.backward(batch_cross_entropy(m.forward(x, Mode::Train), label).grad);
  for (auto* p : m.params())
    for (double g : p->grad.data) EXPECT_LT(std::abs(g), 1e-12);
}

TEST(Architectures, ConvLengthsAndDenseCountsMatchFormulas) {
  for (auto e : kAllExtractors) {
    const auto spec = make_spec(e);
    Model model(spec, 1);
    FeatureShape shape = spec.input;
    long long dense_total = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      const auto out = model.layer_shapes()[i];
      if (l.kind == LayerKind::Conv1d) {
        EXPECT_EQ(out.length, conv_output_len(shape.length, l.padding, l.kernel, l.stride)) << to_string(e) << " layer " << i;
      }
      if (l.kind == LayerKind::Dense) {
        const long long m_in = static_cast<long long>(shape.size()), n = l.units;
        EXPECT_EQ(static_cast<DenseLayer&>(model.layer(i)).param_count(), m_in * n + n);
        dense_total += m_in * n + n;
      }
      shape = out;
    }
    EXPECT_EQ(model.dense_param_total(), dense_total) << to_string(e);
    EXPECT_EQ(model.feature_width(), model.layer_shapes()[static_cast<std::size_t>(model.spec().feature_tap)].size());
  }
}

TEST(Architectures, LayerCounts) {
  EXPECT_EQ(make_spec(Extractor::Cnn).layers.size(), 12u);
  EXPECT_EQ(make_spec(Extractor::Lstm).layers.size(), 5u);
  EXPECT_EQ(make_spec(Extractor::BiLstm).layers.size(), 12u);
  EXPECT_EQ(make_spec(Extractor::LstmCnn).layers.size(), 11u);
  EXPECT_EQ(make_spec(Extractor::StftCnn).layers.size(), 9u);
}
