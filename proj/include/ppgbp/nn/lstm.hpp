#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "ppgbp/error.hpp"
#include "ppgbp/nn/layers.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp::nn {

/// Gate weights act on the concatenation [h_{t-1}; x_t] (size H + D); the
/// first H columns are the recurrent block, the last D the input block.
struct LstmCellParams {
  int hidden = 0;
  int input = 0;
  Eigen::MatrixXd W_i, W_f, W_o, W_c;
  Eigen::VectorXd b_i, b_f, b_o, b_c;

  static LstmCellParams zeros(int hidden, int input) {
    LstmCellParams p;
    p.hidden = hidden;
    p.input = input;
    for (auto* w : {&p.W_i, &p.W_f, &p.W_o, &p.W_c}) *w = Eigen::MatrixXd::Zero(hidden, hidden + input);
    for (auto* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) *b = Eigen::VectorXd::Zero(hidden);
    return p;
  }

  static LstmCellParams random(int hidden, int input, Rng& rng, double scale = 0.5) {
    auto p = zeros(hidden, input);
    for (auto* w : {&p.W_i, &p.W_f, &p.W_o, &p.W_c})
      for (Eigen::Index k = 0; k < w->size(); ++k) w->data()[k] = rng.uniform(-scale, scale);
    for (auto* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c})
      for (Eigen::Index k = 0; k < b->size(); ++k) b->data()[k] = rng.uniform(-scale, scale);
    return p;
  }
};

struct LstmState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;

  static LstmState zeros(int hidden) {
    return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden)};
  }
};

/// One step of the LSTM recurrence:
///   i = sig(W_i [h, x] + b_i), f = sig(W_f [h, x] + b_f), o = sig(W_o [h, x] + b_o)
///   c~ = tanh(W_c [h, x] + b_c), c = f * c_prev + i * c~, h = o * tanh(c)
inline LstmState lstm_step(const LstmCellParams& p, const LstmState& state, const Eigen::VectorXd& x_t) {
  if (x_t.size() != p.input || state.h.size() != p.hidden || state.c.size() != p.hidden) {
    fail(ErrorCode::ShapeMismatch, "lstm_step: state/input size mismatch");
  }
  Eigen::VectorXd z(p.hidden + p.input);
  z << state.h, x_t;
  auto sig = [](const Eigen::VectorXd& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix().eval(); };
  const Eigen::VectorXd i = sig(p.W_i * z + p.b_i);
  const Eigen::VectorXd f = sig(p.W_f * z + p.b_f);
  const Eigen::VectorXd o = sig(p.W_o * z + p.b_o);
  const Eigen::VectorXd c_tilde = (p.W_c * z + p.b_c).array().tanh().matrix();
  LstmState next;
  next.c = f.cwiseProduct(state.c) + i.cwiseProduct(c_tilde);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

/// Runs the forward cell over t = 0..T-1 and the backward cell over
/// t = T-1..0 from zero states; step t of the output is [h_fwd_t; h_bwd_t].
inline std::vector<Eigen::VectorXd> bilstm_forward(const LstmCellParams& fwd, const LstmCellParams& bwd,
                                                   const std::vector<Eigen::VectorXd>& sequence) {
  if (sequence.empty()) fail(ErrorCode::EmptySequence, "bilstm_forward: empty sequence");
  if (fwd.hidden != bwd.hidden || fwd.input != bwd.input) fail(ErrorCode::ShapeMismatch, "bilstm cell sizes differ");
  const std::size_t t_len = sequence.size();
  std::vector<Eigen::VectorXd> out(t_len, Eigen::VectorXd(2 * fwd.hidden));
  auto s = LstmState::zeros(fwd.hidden);
  for (std::size_t t = 0; t < t_len; ++t) {
    s = lstm_step(fwd, s, sequence[t]);
    out[t].head(fwd.hidden) = s.h;
  }
  s = LstmState::zeros(bwd.hidden);
  for (std::size_t t = t_len; t-- > 0;) {
    s = lstm_step(bwd, s, sequence[t]);
    out[t].tail(bwd.hidden) = s.h;
  }
  return out;
}

namespace detail {

/// Batched LSTM over a sequence with BPTT. Parameters live in the owning
/// layer's Param tensors: W_* {H, H+D}, b_* {H}.
class LstmCore {
 public:
  LstmCore(std::size_t hidden, std::size_t input, const std::string& prefix, Rng& rng)
      : h_(hidden), d_(input) {
    const char* gates[] = {"i", "f", "o", "c"};
    for (int g = 0; g < 4; ++g) {
      weights_.emplace_back(prefix + "W_" + gates[g], std::vector<std::size_t>{h_, h_ + d_});
      glorot_uniform(weights_.back().value, static_cast<double>(h_ + d_), static_cast<double>(h_), rng);
    }
    for (int g = 0; g < 4; ++g) biases_.emplace_back(prefix + "b_" + gates[g], std::vector<std::size_t>{h_});
    std::fill(biases_[1].value.data.begin(), biases_[1].value.data.end(), 1.0);  // forget gate
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& w : weights_) out.push_back(&w);
    for (auto& b : biases_) out.push_back(&b);
    return out;
  }

  LstmCellParams cell_params() const {
    auto p = LstmCellParams::zeros(static_cast<int>(h_), static_cast<int>(d_));
    Eigen::MatrixXd* ws[] = {&p.W_i, &p.W_f, &p.W_o, &p.W_c};
    Eigen::VectorXd* bs[] = {&p.b_i, &p.b_f, &p.b_o, &p.b_c};
    for (int g = 0; g < 4; ++g) {
      *ws[g] = ConstRowMap(weights_[static_cast<std::size_t>(g)].value.data.data(), static_cast<Eigen::Index>(h_),
                           static_cast<Eigen::Index>(h_ + d_));
      *bs[g] = Eigen::Map<const Eigen::VectorXd>(biases_[static_cast<std::size_t>(g)].value.data.data(),
                                                 static_cast<Eigen::Index>(h_));
    }
    return p;
  }

  /// xs[t] is D x B. Returns h_t (H x B) for every t, in time order.
  std::vector<Eigen::MatrixXd> forward(const std::vector<Eigen::MatrixXd>& xs, bool reverse) {
    const auto t_len = xs.size();
    const auto bsz = xs.front().cols();
    const auto H = static_cast<Eigen::Index>(h_), D = static_cast<Eigen::Index>(d_);
    assemble();
    reverse_ = reverse;
    z_.assign(t_len, Eigen::MatrixXd());
    gates_.assign(t_len, Eigen::MatrixXd());
    c_.assign(t_len, Eigen::MatrixXd());
    tanh_c_.assign(t_len, Eigen::MatrixXd());
    std::vector<Eigen::MatrixXd> hs(t_len);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, bsz), c = Eigen::MatrixXd::Zero(H, bsz);
    for (std::size_t s = 0; s < t_len; ++s) {
      const std::size_t t = reverse ? t_len - 1 - s : s;
      Eigen::MatrixXd z(H + D, bsz);
      z.topRows(H) = h;
      z.bottomRows(D) = xs[t];
      Eigen::MatrixXd a = w_ * z;
      a.colwise() += b_;
      a.topRows(3 * H) = (1.0 / (1.0 + (-a.topRows(3 * H).array()).exp())).matrix();
      a.bottomRows(H) = a.bottomRows(H).array().tanh().matrix();
      c = a.middleRows(H, H).cwiseProduct(c) + a.topRows(H).cwiseProduct(a.bottomRows(H));
      Eigen::MatrixXd tc = c.array().tanh().matrix();
      h = a.middleRows(2 * H, H).cwiseProduct(tc);
      z_[s] = std::move(z);
      gates_[s] = std::move(a);
      c_[s] = c;
      tanh_c_[s] = std::move(tc);
      hs[t] = h;
    }
    return hs;
  }

  /// dhs[t] is dL/dh_t (H x B), possibly zero. Returns dL/dx_t (D x B).
  std::vector<Eigen::MatrixXd> backward(const std::vector<Eigen::MatrixXd>& dhs) {
    const auto t_len = z_.size();
    const auto bsz = z_.front().cols();
    const auto H = static_cast<Eigen::Index>(h_), D = static_cast<Eigen::Index>(d_);
    Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(4 * H, H + D);
    Eigen::VectorXd db = Eigen::VectorXd::Zero(4 * H);
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(H, bsz), dc_next = Eigen::MatrixXd::Zero(H, bsz);
    std::vector<Eigen::MatrixXd> dxs(t_len);
    Eigen::MatrixXd da(4 * H, bsz);
    for (std::size_t s = t_len; s-- > 0;) {
      const std::size_t t = reverse_ ? t_len - 1 - s : s;
      const auto& a = gates_[s];
      const auto i = a.topRows(H).array();
      const auto f = a.middleRows(H, H).array();
      const auto o = a.middleRows(2 * H, H).array();
      const auto g = a.bottomRows(H).array();
      const auto tc = tanh_c_[s].array();
      const Eigen::ArrayXXd dh = (dhs[t] + dh_next).array();
      const Eigen::ArrayXXd dc = dh * o * (1.0 - tc * tc) + dc_next.array();
      const Eigen::ArrayXXd c_prev = s > 0 ? Eigen::ArrayXXd(c_[s - 1].array()) : Eigen::ArrayXXd::Zero(H, bsz);
      da.topRows(H) = (dc * g * i * (1.0 - i)).matrix();
      da.middleRows(H, H) = (dc * c_prev * f * (1.0 - f)).matrix();
      da.middleRows(2 * H, H) = (dh * tc * o * (1.0 - o)).matrix();
      da.bottomRows(H) = (dc * i * (1.0 - g * g)).matrix();
      dc_next = (dc * f).matrix();
      dw.noalias() += da * z_[s].transpose();
      db += da.rowwise().sum();
      const Eigen::MatrixXd dz = w_.transpose() * da;
      dh_next = dz.topRows(H);
      dxs[t] = dz.bottomRows(D);
    }
    for (int gate = 0; gate < 4; ++gate) {
      RowMap gw(weights_[static_cast<std::size_t>(gate)].grad.data.data(), H, H + D);
      gw += dw.middleRows(gate * H, H);
      Eigen::Map<Eigen::VectorXd> gb(biases_[static_cast<std::size_t>(gate)].grad.data.data(), H);
      gb += db.segment(gate * H, H);
    }
    return dxs;
  }

 private:
  void assemble() {
    const auto H = static_cast<Eigen::Index>(h_), D = static_cast<Eigen::Index>(d_);
    w_.resize(4 * H, H + D);
    b_.resize(4 * H);
    for (int g = 0; g < 4; ++g) {
      w_.middleRows(g * H, H) = ConstRowMap(weights_[static_cast<std::size_t>(g)].value.data.data(), H, H + D);
      b_.segment(g * H, H) = Eigen::Map<const Eigen::VectorXd>(biases_[static_cast<std::size_t>(g)].value.data.data(), H);
    }
  }

  std::size_t h_, d_;
  std::vector<Param> weights_, biases_;
  Eigen::MatrixXd w_;
  Eigen::VectorXd b_;
  bool reverse_ = false;
  std::vector<Eigen::MatrixXd> z_, gates_, c_, tanh_c_;
};

inline std::vector<Eigen::MatrixXd> to_steps(const Tensor& x) {
  const std::size_t bsz = x.shape[0], d = x.shape[1], t_len = x.shape[2];
  std::vector<Eigen::MatrixXd> xs(t_len, Eigen::MatrixXd(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(bsz)));
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t t = 0; t < t_len; ++t)
        xs[t](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b)) = x.at3(b, c, t);
  return xs;
}

inline Tensor from_steps(const std::vector<Eigen::MatrixXd>& xs) {
  const auto t_len = xs.size();
  const auto d = static_cast<std::size_t>(xs.front().rows()), bsz = static_cast<std::size_t>(xs.front().cols());
  Tensor out({bsz, d, t_len});
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t t = 0; t < t_len; ++t)
        out.at3(b, c, t) = xs[t](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b));
  return out;
}

}  // namespace detail

/// Input [D x T] (channels are features, length is time).
class LstmLayer final : public Layer {
 public:
  LstmLayer(FeatureShape in, const LayerSpec& ls, Rng& rng)
      : in_(in), hidden_(static_cast<std::size_t>(ls.units)), seq_(ls.return_sequences),
        core_(hidden_, in.channels, "", rng) {
    if (in.length < 1) fail(ErrorCode::EmptySequence, "lstm needs a non-empty sequence");
  }

  LayerKind kind() const override { return LayerKind::Lstm; }
  FeatureShape output_shape() const override { return {hidden_, seq_ ? in_.length : 1}; }
  LstmCellParams cell_params() const { return core_.cell_params(); }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "lstm");
    auto hs = core_.forward(detail::to_steps(x), false);
    batch_ = x.shape[0];
    if (seq_) return detail::from_steps(hs);
    return detail::from_steps({hs.back()});
  }

  Tensor backward(const Tensor& g) override {
    const auto H = static_cast<Eigen::Index>(hidden_), B = static_cast<Eigen::Index>(batch_);
    std::vector<Eigen::MatrixXd> dhs;
    if (seq_) {
      dhs = detail::to_steps(g);
    } else {
      dhs.assign(in_.length, Eigen::MatrixXd::Zero(H, B));
      dhs.back() = detail::to_steps(g).front();
    }
    return detail::from_steps(core_.backward(dhs));
  }

  std::vector<Param*> params() override { return core_.params(); }

 private:
  FeatureShape in_;
  std::size_t hidden_;
  bool seq_;
  detail::LstmCore core_;
  std::size_t batch_ = 0;
};

/// Output per step is [h_fwd_t; h_bwd_t]; without return_sequences it is
/// the final state of each direction, [h_fwd_{T-1}; h_bwd_0].
class BiLstmLayer final : public Layer {
 public:
  BiLstmLayer(FeatureShape in, const LayerSpec& ls, Rng& rng)
      : in_(in), hidden_(static_cast<std::size_t>(ls.units)), seq_(ls.return_sequences),
        fwd_(hidden_, in.channels, "fwd.", rng), bwd_(hidden_, in.channels, "bwd.", rng) {
    if (in.length < 1) fail(ErrorCode::EmptySequence, "bilstm needs a non-empty sequence");
  }

  LayerKind kind() const override { return LayerKind::BiLstm; }
  FeatureShape output_shape() const override { return {2 * hidden_, seq_ ? in_.length : 1}; }
  LstmCellParams forward_params() const { return fwd_.cell_params(); }
  LstmCellParams backward_params() const { return bwd_.cell_params(); }

  Tensor forward(const Tensor& x, Mode) override {
    detail::check_input(x, in_, "bilstm");
    const auto xs = detail::to_steps(x);
    batch_ = x.shape[0];
    const auto hf = fwd_.forward(xs, false);
    const auto hb = bwd_.forward(xs, true);
    const auto H = static_cast<Eigen::Index>(hidden_), B = static_cast<Eigen::Index>(batch_);
    auto cat = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
      Eigen::MatrixXd m(2 * H, B);
      m << a, b;
      return m;
    };
    if (!seq_) return detail::from_steps({cat(hf.back(), hb.front())});
    std::vector<Eigen::MatrixXd> out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) out[t] = cat(hf[t], hb[t]);
    return detail::from_steps(out);
  }

  Tensor backward(const Tensor& g) override {
    const auto H = static_cast<Eigen::Index>(hidden_), B = static_cast<Eigen::Index>(batch_);
    const std::size_t t_len = in_.length;
    std::vector<Eigen::MatrixXd> dhf(t_len, Eigen::MatrixXd::Zero(H, B)), dhb(t_len, Eigen::MatrixXd::Zero(H, B));
    const auto gs = detail::to_steps(g);
    if (seq_) {
      for (std::size_t t = 0; t < t_len; ++t) {
        dhf[t] = gs[t].topRows(H);
        dhb[t] = gs[t].bottomRows(H);
      }
    } else {
      dhf.back() = gs.front().topRows(H);
      dhb.front() = gs.front().bottomRows(H);
    }
    const auto dxf = fwd_.backward(dhf);
    const auto dxb = bwd_.backward(dhb);
    std::vector<Eigen::MatrixXd> dx(t_len);
    for (std::size_t t = 0; t < t_len; ++t) dx[t] = dxf[t] + dxb[t];
    return detail::from_steps(dx);
  }

  std::vector<Param*> params() override {
    auto p = fwd_.params();
    for (auto* q : bwd_.params()) p.push_back(q);
    return p;
  }

 private:
  FeatureShape in_;
  std::size_t hidden_;
  bool seq_;
  detail::LstmCore fwd_, bwd_;
  std::size_t batch_ = 0;
};

}  // namespace ppgbp::nn
