#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/tensor.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp::nn {

enum class Mode { Train, Infer };

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

enum class LayerKind { Conv1d, BatchNorm, MaxPool, GlobalAvgPool, Dense, Dropout, Lstm, BiLstm, Activation, Flatten };
enum class ActivationKind { None, Relu, Tanh, Sigmoid, Softmax };

constexpr std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1d: return "conv1d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "globalavgpool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::BiLstm: return "bilstm";
    case LayerKind::Activation: return "activation";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

constexpr std::string_view to_string(ActivationKind a) {
  switch (a) {
    case ActivationKind::None: return "none";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Softmax: return "softmax";
  }
  return "?";
}

/// Declarative description of one layer. Only the fields relevant to `kind`
/// are read.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int units = 0;    ///< conv output channels, dense width, LSTM hidden size
  int kernel = 0;   ///< conv kernel width, pool window
  int stride = 1;
  int padding = 0;
  double rate = 0.0;       ///< dropout rate
  double epsilon = 1e-5;   ///< batchnorm
  ActivationKind activation = ActivationKind::None;
  bool return_sequences = false;

  static LayerSpec conv1d(int out_channels, int kernel, int stride = 1, int padding = 0) {
    return {LayerKind::Conv1d, out_channels, kernel, stride, padding};
  }
  static LayerSpec batchnorm(double eps = 1e-5) {
    LayerSpec s{LayerKind::BatchNorm};
    s.epsilon = eps;
    return s;
  }
  static LayerSpec maxpool(int window, int stride = 0) {
    return {LayerKind::MaxPool, 0, window, stride > 0 ? stride : window};
  }
  static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
  static LayerSpec dense(int units, ActivationKind act = ActivationKind::None) {
    LayerSpec s{LayerKind::Dense, units};
    s.activation = act;
    return s;
  }
  static LayerSpec dropout(double rate) {
    LayerSpec s{LayerKind::Dropout};
    s.rate = rate;
    return s;
  }
  static LayerSpec lstm(int hidden, bool return_sequences = false) {
    LayerSpec s{LayerKind::Lstm, hidden};
    s.return_sequences = return_sequences;
    return s;
  }
  static LayerSpec bilstm(int hidden, bool return_sequences = false) {
    LayerSpec s{LayerKind::BiLstm, hidden};
    s.return_sequences = return_sequences;
    return s;
  }
  static LayerSpec act(ActivationKind a) {
    LayerSpec s{LayerKind::Activation};
    s.activation = a;
    return s;
  }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }

  bool operator==(const LayerSpec&) const = default;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual FeatureShape output_shape() const = 0;
  /// Caches what backward() needs.
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  /// Accumulates parameter gradients and returns dL/dx.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  /// Non-trainable state that must be serialized (batchnorm running stats).
  virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }
};

// ---------------------------------------------------------------------------
// Shape arithmetic
// ---------------------------------------------------------------------------

/// n_out = ceil((n_in + 2p - k) / s) + 1. With s > 1 a trailing partial
/// window reads zeros past the padded input.
inline std::size_t conv_output_len(std::size_t n_in, int padding, int kernel, int stride) {
  if (stride < 1 || kernel < 1 || padding < 0) fail(ErrorCode::InvalidSpec, "invalid conv geometry");
  const auto span = static_cast<long long>(n_in) + 2LL * padding;
  if (kernel > span) {
    fail(ErrorCode::KernelExceedsInput, "kernel " + std::to_string(kernel) + " exceeds padded input " +
                                            std::to_string(span));
  }
  const long long num = span - kernel;
  return static_cast<std::size_t>((num + stride - 1) / stride + 1);
}

/// Q = M * N + N
constexpr long long dense_param_count(long long m, long long n) { return m * n + n; }

namespace detail {

inline void glorot_uniform(Tensor& t, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
}

inline void check_input(const Tensor& x, FeatureShape expected, std::string_view who) {
  if (x.shape.size() != 3 || x.shape[1] != expected.channels || x.shape[2] != expected.length) {
    fail(ErrorCode::ShapeMismatch, std::string(who) + " expects " + to_string(expected));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t n_in = 1;

  std::size_t n_out() const { return conv_output_len(n_in, padding, kernel, stride); }
};

namespace detail {

/// im2col over a whole batch: rows (c, k), columns (b, t).
inline Eigen::MatrixXd im2col(const Tensor& x, const ConvSpec& s) {
  const std::size_t batch = x.shape[0], n_out = s.n_out();
  const auto k = static_cast<std::size_t>(s.kernel);
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(s.in_channels * k), static_cast<Eigen::Index>(batch * n_out));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < n_out; ++t) {
      const auto col = static_cast<Eigen::Index>(b * n_out + t);
      for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long long pos = static_cast<long long>(t) * s.stride + static_cast<long long>(j) - s.padding;
          const double v = (pos >= 0 && pos < static_cast<long long>(s.n_in))
                               ? x.at3(b, c, static_cast<std::size_t>(pos))
                               : 0.0;
          cols(static_cast<Eigen::Index>(c * k + j), col) = v;
        }
    }
  return cols;
}

inline void col2im_add(const Eigen::MatrixXd& dcols, const ConvSpec& s, Tensor& dx) {
  const std::size_t batch = dx.shape[0], n_out = s.n_out();
  const auto k = static_cast<std::size_t>(s.kernel);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < n_out; ++t) {
      const auto col = static_cast<Eigen::Index>(b * n_out + t);
      for (std::size_t c = 0; c < s.in_channels; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long long pos = static_cast<long long>(t) * s.stride + static_cast<long long>(j) - s.padding;
          if (pos >= 0 && pos < static_cast<long long>(s.n_in)) {
            dx.at3(b, c, static_cast<std::size_t>(pos)) += dcols(static_cast<Eigen::Index>(c * k + j), col);
          }
        }
    }
}

inline Tensor conv_apply(const Tensor& x, const ConvSpec& s, const Tensor& weights, const Tensor& bias,
                         Eigen::MatrixXd* cols_out = nullptr) {
  const std::size_t batch = x.shape[0], n_out = s.n_out();
  Eigen::MatrixXd cols = im2col(x, s);
  ConstRowMap w(weights.data.data(), static_cast<Eigen::Index>(s.out_channels),
                static_cast<Eigen::Index>(s.in_channels * static_cast<std::size_t>(s.kernel)));
  const Eigen::MatrixXd y = w * cols;
  Tensor out({batch, s.out_channels, n_out});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t t = 0; t < n_out; ++t)
        out.at3(b, o, t) = y(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * n_out + t)) + bias.data[o];
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

}  // namespace detail

/// Single-sample cross-correlation. input [C_in x n_in], weights
/// {C_out, C_in, k}, bias {C_out}; output [C_out x n_out].
inline Tensor conv1d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
  if (input.shape != std::vector<std::size_t>{spec.in_channels, spec.n_in} ||
      weights.shape != std::vector<std::size_t>{spec.out_channels, spec.in_channels, static_cast<std::size_t>(spec.kernel)} ||
      bias.shape != std::vector<std::size_t>{spec.out_channels}) {
    fail(ErrorCode::ShapeMismatch, "conv1d_forward: shapes inconsistent with spec");
  }
  Tensor batched({1, spec.in_channels, spec.n_in}, input.data);
  Tensor y = detail::conv_apply(batched, spec, weights, bias);
  return Tensor({spec.out_channels, spec.n_out()}, std::move(y.data));
}

class Conv1dLayer final : public Layer {
 public:
  Conv1dLayer(FeatureShape in, const LayerSpec& ls, Rng& rng)
      : in_(in),
        spec_{ls.kernel, ls.stride, ls.padding, in.channels, static_cast<std::size_t>(ls.units), in.length},
        w_("W", {spec_.out_channels, spec_.in_channels, static_cast<std::size_t>(ls.kernel)}),
        b_("b", {spec_.out_channels}) {
    (void)spec_.n_out();
    detail::glorot_uniform(w_.value, static_cast<double>(in.channels) * ls.kernel,
                           static_cast<double>(ls.units) * ls.kernel, rng);
  }

  LayerKind kind() const override { return LayerKind::Conv1d; }
  FeatureShape output_shape() const override { return {spec_.out_channels, spec_.n_out()}; }
  const ConvSpec& conv_spec() const { return spec_; }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "conv1d");
    batch_ = x.shape[0];
    return detail::conv_apply(x, spec_, w_.value, b_.value, &cols_);
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t n_out = spec_.n_out();
    Eigen::MatrixXd dy(static_cast<Eigen::Index>(spec_.out_channels), static_cast<Eigen::Index>(batch_ * n_out));
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t o = 0; o < spec_.out_channels; ++o)
        for (std::size_t t = 0; t < n_out; ++t)
          dy(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * n_out + t)) = g.at3(b, o, t);
    const auto ck = static_cast<Eigen::Index>(spec_.in_channels * static_cast<std::size_t>(spec_.kernel));
    RowMap dw(w_.grad.data.data(), static_cast<Eigen::Index>(spec_.out_channels), ck);
    dw.noalias() += dy * cols_.transpose();
    Eigen::Map<Eigen::VectorXd> db(b_.grad.data.data(), static_cast<Eigen::Index>(spec_.out_channels));
    db += dy.rowwise().sum();
    ConstRowMap w(w_.value.data.data(), static_cast<Eigen::Index>(spec_.out_channels), ck);
    const Eigen::MatrixXd dcols = w.transpose() * dy;
    Tensor dx({batch_, in_.channels, in_.length});
    detail::col2im_add(dcols, spec_, dx);
    return dx;
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }

 private:
  FeatureShape in_;
  ConvSpec spec_;
  Param w_, b_;
  Eigen::MatrixXd cols_;
  std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// BatchNorm (per channel, statistics over batch and length)
// ---------------------------------------------------------------------------

struct BatchNormResult {
  Tensor y;
  std::vector<double> mean, var;
};

/// Training-mode normalization: (x - mu)/sqrt(var + eps) * gamma + beta, with
/// mu/var the biased statistics of each channel over batch and length.
inline BatchNormResult batchnorm_forward(const Tensor& x, std::span<const double> gamma,
                                         std::span<const double> beta, double eps) {
  if (x.shape.size() != 3) fail(ErrorCode::ShapeMismatch, "batchnorm expects {B, C, L}");
  const std::size_t bsz = x.shape[0], ch = x.shape[1], len = x.shape[2];
  if (bsz < 2) fail(ErrorCode::BatchTooSmall, "batchnorm needs a batch of at least 2 in training mode");
  if (gamma.size() != ch || beta.size() != ch) fail(ErrorCode::ShapeMismatch, "gamma/beta width");
  BatchNormResult r{Tensor(x.shape), std::vector<double>(ch), std::vector<double>(ch)};
  const double m = static_cast<double>(bsz * len);
  for (std::size_t c = 0; c < ch; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t l = 0; l < len; ++l) s += x.at3(b, c, l);
    const double mu = s / m;
    double v = 0.0;
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t l = 0; l < len; ++l) v += (x.at3(b, c, l) - mu) * (x.at3(b, c, l) - mu);
    v /= m;
    r.mean[c] = mu;
    r.var[c] = v;
    const double inv = 1.0 / std::sqrt(v + eps);
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t l = 0; l < len; ++l) r.y.at3(b, c, l) = gamma[c] * (x.at3(b, c, l) - mu) * inv + beta[c];
  }
  return r;
}

class BatchNormLayer final : public Layer {
 public:
  static constexpr double kMomentum = 0.9;

  BatchNormLayer(FeatureShape in, const LayerSpec& ls)
      : in_(in), eps_(ls.epsilon), gamma_("gamma", {in.channels}), beta_("beta", {in.channels}),
        running_mean_({in.channels}, 0.0), running_var_({in.channels}, 1.0) {
    std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), 1.0);
  }

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  FeatureShape output_shape() const override { return in_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    detail::check_input(x, in_, "batchnorm");
    const std::size_t ch = in_.channels;
    if (mode == Mode::Infer) {
      Tensor y(x.shape);
      for (std::size_t b = 0; b < x.shape[0]; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          const double inv = 1.0 / std::sqrt(running_var_.data[c] + eps_);
          for (std::size_t l = 0; l < in_.length; ++l)
            y.at3(b, c, l) = gamma_.value.data[c] * (x.at3(b, c, l) - running_mean_.data[c]) * inv + beta_.value.data[c];
        }
      return y;
    }
    auto r = batchnorm_forward(x, gamma_.value.data, beta_.value.data, eps_);
    x_ = x;
    mean_ = r.mean;
    var_ = r.var;
    for (std::size_t c = 0; c < ch; ++c) {
      running_mean_.data[c] = kMomentum * running_mean_.data[c] + (1.0 - kMomentum) * r.mean[c];
      running_var_.data[c] = kMomentum * running_var_.data[c] + (1.0 - kMomentum) * r.var[c];
    }
    return std::move(r.y);
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t bsz = x_.shape[0], ch = in_.channels, len = in_.length;
    const double m = static_cast<double>(bsz * len);
    Tensor dx(x_.shape);
    for (std::size_t c = 0; c < ch; ++c) {
      const double inv = 1.0 / std::sqrt(var_[c] + eps_);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double xhat = (x_.at3(b, c, l) - mean_[c]) * inv;
          sum_dy += g.at3(b, c, l);
          sum_dy_xhat += g.at3(b, c, l) * xhat;
        }
      gamma_.grad.data[c] += sum_dy_xhat;
      beta_.grad.data[c] += sum_dy;
      const double k = gamma_.value.data[c] * inv / m;
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double xhat = (x_.at3(b, c, l) - mean_[c]) * inv;
          dx.at3(b, c, l) = k * (m * g.at3(b, c, l) - sum_dy - xhat * sum_dy_xhat);
        }
    }
    return dx;
  }

  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

 private:
  FeatureShape in_;
  double eps_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor x_;
  std::vector<double> mean_, var_;
};

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

enum class PoolKind { Max, GlobalAvg };

/// Single-sample pooling over [C x L]. Max uses valid windows; global
/// average emits one mean per channel.
inline Tensor pool_forward(const Tensor& input, PoolKind kind, int window = 0, int stride = 0) {
  if (input.shape.size() != 2) fail(ErrorCode::ShapeMismatch, "pool_forward expects [C x L]");
  const std::size_t ch = input.shape[0], len = input.shape[1];
  if (kind == PoolKind::GlobalAvg) {
    Tensor out({ch, 1});
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t l = 0; l < len; ++l) s += input.data[c * len + l];
      out.data[c] = s / static_cast<double>(len);
    }
    return out;
  }
  if (stride <= 0) stride = window;
  if (window < 1 || static_cast<std::size_t>(window) > len) fail(ErrorCode::WindowTooLarge, "pool window exceeds input");
  const std::size_t n_out = (len - static_cast<std::size_t>(window)) / static_cast<std::size_t>(stride) + 1;
  Tensor out({ch, n_out});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < n_out; ++t) {
      const double* p = &input.data[c * len + t * static_cast<std::size_t>(stride)];
      out.data[c * n_out + t] = *std::max_element(p, p + window);
    }
  return out;
}

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(FeatureShape in, const LayerSpec& ls) : in_(in), window_(ls.kernel), stride_(ls.stride) {
    if (window_ < 1 || static_cast<std::size_t>(window_) > in.length) {
      fail(ErrorCode::WindowTooLarge, "maxpool window " + std::to_string(window_) + " exceeds length " +
                                          std::to_string(in.length));
    }
    out_len_ = (in.length - static_cast<std::size_t>(window_)) / static_cast<std::size_t>(stride_) + 1;
  }

  LayerKind kind() const override { return LayerKind::MaxPool; }
  FeatureShape output_shape() const override { return {in_.channels, out_len_}; }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "maxpool");
    const std::size_t bsz = x.shape[0];
    Tensor y({bsz, in_.channels, out_len_});
    argmax_.assign(y.size(), 0);
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t c = 0; c < in_.channels; ++c)
        for (std::size_t t = 0; t < out_len_; ++t) {
          const std::size_t start = t * static_cast<std::size_t>(stride_);
          std::size_t best = start;
          for (std::size_t j = start + 1; j < start + static_cast<std::size_t>(window_); ++j)
            if (x.at3(b, c, j) > x.at3(b, c, best)) best = j;
          y.at3(b, c, t) = x.at3(b, c, best);
          argmax_[(b * in_.channels + c) * out_len_ + t] = best;
        }
    batch_ = bsz;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor dx({batch_, in_.channels, in_.length});
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t c = 0; c < in_.channels; ++c)
        for (std::size_t t = 0; t < out_len_; ++t)
          dx.at3(b, c, argmax_[(b * in_.channels + c) * out_len_ + t]) += g.at3(b, c, t);
    return dx;
  }

 private:
  FeatureShape in_;
  int window_, stride_;
  std::size_t out_len_ = 0, batch_ = 0;
  std::vector<std::size_t> argmax_;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  explicit GlobalAvgPoolLayer(FeatureShape in) : in_(in) {}

  LayerKind kind() const override { return LayerKind::GlobalAvgPool; }
  FeatureShape output_shape() const override { return {in_.channels, 1}; }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "globalavgpool");
    batch_ = x.shape[0];
    Tensor y({batch_, in_.channels, 1});
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t c = 0; c < in_.channels; ++c) {
        double s = 0.0;
        for (std::size_t l = 0; l < in_.length; ++l) s += x.at3(b, c, l);
        y.at3(b, c, 0) = s / static_cast<double>(in_.length);
      }
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor dx({batch_, in_.channels, in_.length});
    const double inv = 1.0 / static_cast<double>(in_.length);
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t c = 0; c < in_.channels; ++c)
        for (std::size_t l = 0; l < in_.length; ++l) dx.at3(b, c, l) = g.at3(b, c, 0) * inv;
    return dx;
  }

 private:
  FeatureShape in_;
  std::size_t batch_ = 0;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Applies `act` in place over a {B, C, L} tensor; softmax runs over C.
inline void activate(ActivationKind act, Tensor& t) {
  switch (act) {
    case ActivationKind::None: return;
    case ActivationKind::Relu:
      for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
      return;
    case ActivationKind::Tanh:
      for (auto& v : t.data) v = std::tanh(v);
      return;
    case ActivationKind::Sigmoid:
      for (auto& v : t.data) v = sigmoid(v);
      return;
    case ActivationKind::Softmax: {
      const std::size_t bsz = t.shape[0], ch = t.shape[1], len = t.shape[2];
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          double mx = t.at3(b, 0, l);
          for (std::size_t c = 1; c < ch; ++c) mx = std::max(mx, t.at3(b, c, l));
          double s = 0.0;
          for (std::size_t c = 0; c < ch; ++c) s += (t.at3(b, c, l) = std::exp(t.at3(b, c, l) - mx));
          for (std::size_t c = 0; c < ch; ++c) t.at3(b, c, l) /= s;
        }
      return;
    }
  }
}

/// dL/dx given the activation output y and dL/dy.
inline Tensor activation_grad(ActivationKind act, const Tensor& y, const Tensor& g) {
  Tensor dx(y.shape);
  switch (act) {
    case ActivationKind::None: dx = g; break;
    case ActivationKind::Relu:
      for (std::size_t i = 0; i < y.size(); ++i) dx.data[i] = y.data[i] > 0.0 ? g.data[i] : 0.0;
      break;
    case ActivationKind::Tanh:
      for (std::size_t i = 0; i < y.size(); ++i) dx.data[i] = g.data[i] * (1.0 - y.data[i] * y.data[i]);
      break;
    case ActivationKind::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) dx.data[i] = g.data[i] * y.data[i] * (1.0 - y.data[i]);
      break;
    case ActivationKind::Softmax: {
      const std::size_t bsz = y.shape[0], ch = y.shape[1], len = y.shape[2];
      for (std::size_t b = 0; b < bsz; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          double dot = 0.0;
          for (std::size_t c = 0; c < ch; ++c) dot += g.at3(b, c, l) * y.at3(b, c, l);
          for (std::size_t c = 0; c < ch; ++c) dx.at3(b, c, l) = y.at3(b, c, l) * (g.at3(b, c, l) - dot);
        }
      break;
    }
  }
  return dx;
}

}  // namespace detail

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(FeatureShape in, ActivationKind act) : in_(in), act_(act) {}

  LayerKind kind() const override { return LayerKind::Activation; }
  FeatureShape output_shape() const override { return in_; }
  ActivationKind activation() const { return act_; }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "activation");
    y_ = x;
    detail::activate(act_, y_);
    return y_;
  }
  Tensor backward(const Tensor& g) override { return detail::activation_grad(act_, y_, g); }

 private:
  FeatureShape in_;
  ActivationKind act_;
  Tensor y_;
};

// ---------------------------------------------------------------------------
// Dense / Flatten / Dropout
// ---------------------------------------------------------------------------

/// Fully connected over a [M x 1] input; W is {N, M}.
class DenseLayer final : public Layer {
 public:
  DenseLayer(FeatureShape in, const LayerSpec& ls, Rng& rng)
      : in_(in), units_(static_cast<std::size_t>(ls.units)), act_(ls.activation),
        w_("W", {units_, in.channels}), b_("b", {units_}) {
    if (in.length != 1) fail(ErrorCode::ShapeMismatch, "dense expects a [M x 1] input; add flatten or pooling");
    if (act_ == ActivationKind::Softmax) fail(ErrorCode::InvalidSpec, "use a softmax activation layer, not a fused one");
    detail::glorot_uniform(w_.value, static_cast<double>(in.channels), static_cast<double>(units_), rng);
  }

  LayerKind kind() const override { return LayerKind::Dense; }
  FeatureShape output_shape() const override { return {units_, 1}; }
  std::size_t input_width() const { return in_.channels; }
  std::size_t units() const { return units_; }
  long long param_count() const { return static_cast<long long>(w_.value.size() + b_.value.size()); }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "dense");
    const auto bsz = static_cast<Eigen::Index>(x.shape[0]);
    x_ = x;
    Tensor y({x.shape[0], units_, 1});
    ConstColMap xm(x.data.data(), static_cast<Eigen::Index>(in_.channels), bsz);
    ColMap ym(y.data.data(), static_cast<Eigen::Index>(units_), bsz);
    ConstRowMap w(w_.value.data.data(), static_cast<Eigen::Index>(units_), static_cast<Eigen::Index>(in_.channels));
    Eigen::Map<const Eigen::VectorXd> bias(b_.value.data.data(), static_cast<Eigen::Index>(units_));
    ym.noalias() = w * xm;
    ym.colwise() += bias;
    detail::activate(act_, y);
    y_ = y;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const Tensor dz = detail::activation_grad(act_, y_, g);
    const auto bsz = static_cast<Eigen::Index>(x_.shape[0]);
    const auto m = static_cast<Eigen::Index>(in_.channels), n = static_cast<Eigen::Index>(units_);
    ConstColMap dzm(dz.data.data(), n, bsz);
    ConstColMap xm(x_.data.data(), m, bsz);
    RowMap dw(w_.grad.data.data(), n, m);
    dw.noalias() += dzm * xm.transpose();
    Eigen::Map<Eigen::VectorXd> db(b_.grad.data.data(), n);
    db += dzm.rowwise().sum();
    ConstRowMap w(w_.value.data.data(), n, m);
    Tensor dx(x_.shape);
    ColMap dxm(dx.data.data(), m, bsz);
    dxm.noalias() = w.transpose() * dzm;
    return dx;
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }

 private:
  FeatureShape in_;
  std::size_t units_;
  ActivationKind act_;
  Param w_, b_;
  Tensor x_, y_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(FeatureShape in) : in_(in) {}
  LayerKind kind() const override { return LayerKind::Flatten; }
  FeatureShape output_shape() const override { return {in_.size(), 1}; }
  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "flatten");
    return Tensor({x.shape[0], in_.size(), 1}, x.data);
  }
  Tensor backward(const Tensor& g) override {
    return Tensor({g.shape[0], in_.channels, in_.length}, g.data);
  }

 private:
  FeatureShape in_;
};

/// Inverted dropout. With replay enabled, training-mode passes reuse the
/// last drawn mask (used by gradient checks); inference is the identity.
class DropoutLayer final : public Layer {
 public:
  DropoutLayer(FeatureShape in, double rate, std::uint64_t seed) : in_(in), rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorCode::InvalidSpec, "dropout rate must lie in [0,1)");
  }

  LayerKind kind() const override { return LayerKind::Dropout; }
  FeatureShape output_shape() const override { return in_; }
  void set_replay(bool on) { replay_ = on; }
  double rate() const { return rate_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    detail::check_input(x, in_, "dropout");
    if (mode == Mode::Infer) {
      mask_.clear();
      return x;
    }
    if (!(replay_ && mask_.size() == x.size())) {
      mask_.resize(x.size());
      const double scale = 1.0 / (1.0 - rate_);
      for (auto& m : mask_) m = rng_.uniform() < rate_ ? 0.0 : scale;
    }
    Tensor y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] * mask_[i];
    return y;
  }

  Tensor backward(const Tensor& g) override {
    if (mask_.empty()) return g;
    Tensor dx(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) dx.data[i] = g.data[i] * mask_[i];
    return dx;
  }

 private:
  FeatureShape in_;
  double rate_;
  Rng rng_;
  bool replay_ = false;
  std::vector<double> mask_;
};

}  // namespace ppgbp::nn
