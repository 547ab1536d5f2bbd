#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/layers.hpp"
#include "ppgbp/nn/lstm.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp::nn {

inline constexpr std::size_t kNumClasses = 2;

/// Layer stack plus the index of the layer whose output is used as the
/// feature vector for downstream heads. The loss is always categorical
/// cross-entropy over the final 2-wide output; a trailing softmax layer is
/// folded into the loss.
struct ModelSpec {
  std::string name;
  FeatureShape input;
  std::vector<LayerSpec> layers;
  int feature_tap = -1;

  bool operator==(const ModelSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct SoftmaxCrossEntropy {
  double loss = 0.0;
  std::vector<double> probabilities;
};

/// Max-subtracted softmax; loss = -ln p[label].
inline SoftmaxCrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) fail(ErrorCode::ShapeMismatch, "label outside logit range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  SoftmaxCrossEntropy r;
  r.probabilities.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) r.probabilities[k] = std::exp(logits[k] - mx) / sum;
  r.loss = -(logits[label] - mx - std::log(sum));
  return r;
}

struct BatchLoss {
  double loss = 0.0;  ///< mean over the batch
  std::vector<std::array<double, kNumClasses>> probabilities;
  Tensor grad;  ///< dL/dlogits = (p - onehot) / B
};

inline BatchLoss batch_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t bsz = logits.shape[0];
  if (logits.shape[1] != kNumClasses || logits.shape[2] != 1 || labels.size() != bsz) {
    fail(ErrorCode::ShapeMismatch, "cross-entropy expects {B, 2, 1} logits and B labels");
  }
  BatchLoss r;
  r.grad = Tensor(logits.shape);
  r.probabilities.resize(bsz);
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::span<const double> row(&logits.data[b * kNumClasses], kNumClasses);
    const auto sce = softmax_cross_entropy(row, static_cast<std::size_t>(labels[b]));
    r.loss += sce.loss;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      r.probabilities[b][k] = sce.probabilities[k];
      r.grad.data[b * kNumClasses + k] =
          (sce.probabilities[k] - (static_cast<int>(k) == labels[b] ? 1.0 : 0.0)) / static_cast<double>(bsz);
    }
  }
  r.loss /= static_cast<double>(bsz);
  return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
                      const AdamConfig& hyper) {
  if (params.size() != grads.size()) fail(ErrorCode::ShapeMismatch, "adam: params/grads size");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    Rng rng(seed);
    FeatureShape shape = spec_.input;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      layers_.push_back(make_layer(shape, spec_.layers[i], rng, derive_seed(seed, 1000 + i)));
      shape = layers_.back()->output_shape();
      shapes_.push_back(shape);
    }
    if (layers_.empty() || shape != FeatureShape{kNumClasses, 1}) {
      fail(ErrorCode::ShapeMismatch, spec_.name + ": final layer must output 2 class scores, got " + to_string(shape));
    }
    logits_end_ = layers_.size();
    if (spec_.layers.back().kind == LayerKind::Activation &&
        spec_.layers.back().activation == ActivationKind::Softmax) {
      --logits_end_;
    }
    if (spec_.feature_tap < 0) spec_.feature_tap = static_cast<int>(logits_end_) - 2;
    if (spec_.feature_tap < 0 || static_cast<std::size_t>(spec_.feature_tap) >= logits_end_) {
      fail(ErrorCode::InvalidSpec, "feature_tap out of range");
    }
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  /// Output shape of each layer, in order.
  const std::vector<FeatureShape>& layer_shapes() const { return shapes_; }
  FeatureShape feature_shape() const { return shapes_[static_cast<std::size_t>(spec_.feature_tap)]; }
  std::size_t feature_width() const { return feature_shape().size(); }

  /// Logits {B, 2, 1}.
  Tensor forward(const Tensor& x, Mode mode) { return run(x, logits_end_, mode); }

  /// Output of layer `index` (inclusive).
  Tensor forward_to(const Tensor& x, std::size_t index, Mode mode) { return run(x, index + 1, mode); }

  /// Propagates dL/dlogits back through every layer, accumulating gradients.
  Tensor backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (std::size_t i = logits_end_; i-- > 0;) g = layers_[i]->backward(g);
    return g;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  /// (qualified name, tensor) for every parameter and buffer.
  std::vector<std::pair<std::string, Tensor*>> state() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (auto* p : layers_[i]->params()) out.emplace_back(std::to_string(i) + "." + p->name, &p->value);
      for (auto& [name, t] : layers_[i]->buffers()) out.emplace_back(std::to_string(i) + "." + name, t);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.zero();
  }

  void set_dropout_replay(bool on) {
    for (auto& l : layers_)
      if (auto* d = dynamic_cast<DropoutLayer*>(l.get())) d->set_replay(on);
  }

  std::vector<std::array<double, kNumClasses>> predict_proba(const Tensor& x) {
    const Tensor logits = forward(x, Mode::Infer);
    std::vector<std::array<double, kNumClasses>> out(x.shape[0]);
    for (std::size_t b = 0; b < out.size(); ++b) {
      const auto sce = softmax_cross_entropy(std::span<const double>(&logits.data[b * kNumClasses], kNumClasses), 0);
      out[b] = {sce.probabilities[0], sce.probabilities[1]};
    }
    return out;
  }

  /// Sum of M*N + N over dense layers, counted from the realized parameters.
  long long dense_param_total() const {
    long long total = 0;
    for (const auto& l : layers_)
      if (const auto* d = dynamic_cast<const DenseLayer*>(l.get())) total += d->param_count();
    return total;
  }

 private:
  static std::unique_ptr<Layer> make_layer(FeatureShape in, const LayerSpec& s, Rng& rng, std::uint64_t seed) {
    switch (s.kind) {
      case LayerKind::Conv1d: return std::make_unique<Conv1dLayer>(in, s, rng);
      case LayerKind::BatchNorm: return std::make_unique<BatchNormLayer>(in, s);
      case LayerKind::MaxPool: return std::make_unique<MaxPoolLayer>(in, s);
      case LayerKind::GlobalAvgPool: return std::make_unique<GlobalAvgPoolLayer>(in);
      case LayerKind::Dense: return std::make_unique<DenseLayer>(in, s, rng);
      case LayerKind::Dropout: return std::make_unique<DropoutLayer>(in, s.rate, seed);
      case LayerKind::Lstm: return std::make_unique<LstmLayer>(in, s, rng);
      case LayerKind::BiLstm: return std::make_unique<BiLstmLayer>(in, s, rng);
      case LayerKind::Activation: return std::make_unique<ActivationLayer>(in, s.activation);
      case LayerKind::Flatten: return std::make_unique<FlattenLayer>(in);
    }
    fail(ErrorCode::InvalidSpec, "unknown layer kind");
  }

  Tensor run(const Tensor& x, std::size_t end, Mode mode) {
    if (x.shape.size() != 3 || x.shape[1] != spec_.input.channels || x.shape[2] != spec_.input.length) {
      fail(ErrorCode::ShapeMismatch, spec_.name + " expects input " + to_string(spec_.input));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < end; ++i) h = layers_[i]->forward(h, mode);
    return h;
  }

  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<FeatureShape> shapes_;
  std::size_t logits_end_ = 0;
};

}  // namespace ppgbp::nn
