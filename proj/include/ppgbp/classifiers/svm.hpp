#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppgbp/classifiers/features.hpp"
#include "ppgbp/error.hpp"

namespace ppgbp {

enum class KernelKind { Linear, Rbf };

struct Kernel {
  KernelKind kind = KernelKind::Rbf;
  /// rbf width; <= 0 means 1 / (m * variance of all feature values).
  double gamma = 0.0;

  double operator()(std::span<const double> a, std::span<const double> b) const {
    double s = 0.0;
    if (kind == KernelKind::Linear) {
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    }
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-gamma * s);
  }

  bool operator==(const Kernel&) const = default;
};

struct SvmConfig {
  Kernel kernel{};
  double C = 1.0;
  double tol = 1e-6;
  int max_sweeps = 10000;
};

/// Objectives after one sweep of n pair updates.
struct SvmTrainState {
  long long sweep = 0;
  double primal = 0.0;     ///< J(beta): best primal value seen so far
  double dual = 0.0;       ///< W(alpha) = sum(alpha) - 1/2 alpha'Q alpha
  double neg_dual = 0.0;   ///< L(alpha) = -W(alpha)
  double gap = 0.0;        ///< Delta = (J + L) / (J + 1)
  double kkt_violation = 0.0;
};

struct SvmModel {
  Kernel kernel{};
  double C = 1.0;
  double bias = 0.0;
  std::vector<double> alpha;  ///< support vectors only (alpha > 0)
  std::vector<int> y;         ///< +-1 per support vector
  FeatureMatrix support;
  std::size_t width = 0;
  std::vector<SvmTrainState> history;
  long long iterations = 0;

  double decision(std::span<const double> x) const {
    if (x.size() != width) fail(ErrorCode::ShapeMismatch, "feature width differs from training");
    double f = bias;
    for (std::size_t i = 0; i < alpha.size(); ++i) f += alpha[i] * y[i] * kernel(support[i], x);
    return f;
  }
};

struct SvmPrediction {
  int label = 1;  ///< +1 or -1
  double decision = 0.0;
};

inline double default_rbf_gamma(const FeatureMatrix& x) {
  const std::size_t m = x.front().size();
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const auto& row : x)
    for (double v : row) {
      sum += v;
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  for (const auto& row : x)
    for (double v : row) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(count);
  return var > 0.0 ? 1.0 / (static_cast<double>(m) * var) : 1.0 / static_cast<double>(m);
}

namespace detail {

/// min over b of sum_i C * max(0, 1 - y_i (g_i + b)). Each hinge term is
/// convex piecewise linear with one breakpoint and the total slope rises by
/// one at every breakpoint, starting from -#positives, so the minimum sits
/// at the P-th smallest breakpoint.
inline double min_hinge_over_bias(const Eigen::VectorXd& g, std::span<const int> y, double C, double* b_out = nullptr) {
  const auto n = static_cast<std::size_t>(g.size());
  std::vector<double> bp(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bp[i] = y[i] - g[static_cast<Eigen::Index>(i)];
    positives += y[i] > 0 ? 1 : 0;
  }
  double b = 0.0;
  if (positives == 0) {
    b = *std::min_element(bp.begin(), bp.end());
  } else {
    std::nth_element(bp.begin(), bp.begin() + static_cast<std::ptrdiff_t>(positives - 1), bp.end());
    b = bp[positives - 1];
  }
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) h += std::max(0.0, 1.0 - y[i] * (g[static_cast<Eigen::Index>(i)] + b));
  if (b_out) *b_out = b;
  return C * h;
}

}  // namespace detail

/// Dual SMO with maximal-violating-pair selection (second-order choice of
/// the second index).
///
/// With Q_ij = y_i y_j K(x_i, x_j) the dual is W(a) = sum a - a'Qa/2 under
/// 0 <= a <= C, y'a = 0, and the primal at w = sum a_i y_i phi(x_i) is
///   J = a'Qa/2 + C sum max(0, 1 - y_i f(x_i)),
/// with b chosen to minimize J. Taking L(a) = -W(a), the feasibility gap
///   Delta = (J + L) / (J + 1) = (J - W) / (J + 1)
/// is non-negative by weak duality and vanishes at the optimum. J is the
/// smallest primal value seen so far, which keeps Delta non-increasing as W
/// rises monotonically under SMO.
///
/// The solver stops when Delta <= tol and the maximal KKT violation is at
/// most tol.
inline SvmModel svm_fit(const FeatureMatrix& x, std::span<const int> labels, const SvmConfig& config) {
  const std::size_t m = detail::check_features(x, labels.size());
  const std::size_t n = x.size();
  bool has_pos = false, has_neg = false;
  for (int v : labels) {
    if (v != 1 && v != -1) fail(ErrorCode::DegenerateLabels, "svm labels must be +1 or -1");
    (v > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) fail(ErrorCode::DegenerateLabels, "svm needs both classes");
  if (!(config.C > 0.0) || !(config.tol > 0.0) || config.max_sweeps < 1) {
    fail(ErrorCode::ConfigError, "svm needs C > 0, tol > 0, max_sweeps >= 1");
  }

  SvmModel model;
  model.kernel = config.kernel;
  if (model.kernel.kind == KernelKind::Rbf && model.kernel.gamma <= 0.0) model.kernel.gamma = default_rbf_gamma(x);
  model.C = config.C;
  model.width = m;

  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd K(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = model.kernel(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]);
  Eigen::VectorXd yv(N);
  for (Eigen::Index i = 0; i < N; ++i) yv[i] = labels[static_cast<std::size_t>(i)];

  const double C = config.C;
  constexpr double kTau = 1e-12;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd G = Eigen::VectorXd::Constant(N, -1.0);  // Q alpha - 1

  auto in_up = [&](Eigen::Index t) { return yv[t] > 0 ? alpha[t] < C : alpha[t] > 0; };
  auto in_low = [&](Eigen::Index t) { return yv[t] > 0 ? alpha[t] > 0 : alpha[t] < C; };
  auto violation = [&](double& m_up, double& m_low) {
    m_up = -std::numeric_limits<double>::infinity();
    m_low = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < N; ++t) {
      const double v = -yv[t] * G[t];
      if (in_up(t)) m_up = std::max(m_up, v);
      if (in_low(t)) m_low = std::min(m_low, v);
    }
    return m_up - m_low;
  };

  double best_primal = std::numeric_limits<double>::infinity();
  auto record = [&](long long sweep) {
    const double quad = alpha.dot(G + Eigen::VectorXd::Ones(N));  // a'Qa
    const double dual = alpha.sum() - 0.5 * quad;
    const Eigen::VectorXd g = yv.cwiseProduct(G + Eigen::VectorXd::Ones(N));  // sum_j a_j y_j K_ij
    const double primal = 0.5 * quad + detail::min_hinge_over_bias(g, labels, C);
    best_primal = std::min(best_primal, primal);
    SvmTrainState s;
    s.sweep = sweep;
    s.primal = best_primal;
    s.dual = dual;
    s.neg_dual = -dual;
    s.gap = std::max(0.0, (best_primal + s.neg_dual) / (best_primal + 1.0));
    double mu, ml;
    s.kkt_violation = std::max(0.0, violation(mu, ml));
    model.history.push_back(s);
    return s;
  };

  const long long max_iter = static_cast<long long>(config.max_sweeps) * static_cast<long long>(n);
  double kkt_eps = config.tol;
  long long iter = 0;
  bool converged = false;
  record(0);
  while (iter < max_iter) {
    double m_up, m_low;
    Eigen::Index i = -1;
    m_up = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < N; ++t)
      if (in_up(t) && -yv[t] * G[t] > m_up) {
        m_up = -yv[t] * G[t];
        i = t;
      }
    m_low = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < N; ++t) {
      if (!in_low(t)) continue;
      const double v = -yv[t] * G[t];
      m_low = std::min(m_low, v);
      const double b = m_up - v;
      if (b > 0) {
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (m_up - m_low <= kkt_eps || j < 0) {
      const auto s = record(static_cast<long long>(iter / static_cast<long long>(n)) + 1);
      if (s.gap <= config.tol && s.kkt_violation <= config.tol) {
        converged = true;
        break;
      }
      // The KKT target was met but the duality gap was not: tighten it.
      kkt_eps = std::max(kkt_eps * 0.1, 1e-15);
      if (m_up - m_low <= 1e-15 || j < 0) break;
      continue;
    }

    // Pair update on (i, j).
    const double Ci = C, Cj = C;
    const double old_ai = alpha[i], old_aj = alpha[j];
    double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (quad <= 0) quad = kTau;
    if (yv[i] != yv[j]) {
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = Ci - diff; }
      } else {
        if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = Cj + diff; }
      }
    } else {
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) { alpha[i] = Ci; alpha[j] = sum - Ci; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) { alpha[j] = Cj; alpha[i] = sum - Cj; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    G += (yv[i] * dai) * yv.cwiseProduct(K.col(i)) + (yv[j] * daj) * yv.cwiseProduct(K.col(j));
    ++iter;
    if (iter % static_cast<long long>(n) == 0) record(iter / static_cast<long long>(n));
  }
  model.iterations = iter;
  if (!converged) {
    const auto s = model.history.back();
    if (!(s.gap <= config.tol && s.kkt_violation <= config.tol)) {
      fail(ErrorCode::NoConvergence, "svm did not reach the feasibility-gap tolerance", config.max_sweeps);
    }
  }

  // Bias: mean of -y_i G_i over free vectors, else the midpoint of the
  // feasible interval.
  double sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < N; ++t) {
    if (alpha[t] > 0 && alpha[t] < C) {
      sum_free += -yv[t] * G[t];
      ++n_free;
    }
  }
  if (n_free > 0) {
    model.bias = sum_free / n_free;
  } else {
    double m_up, m_low;
    violation(m_up, m_low);
    model.bias = 0.5 * (m_up + m_low);
  }

  for (Eigen::Index t = 0; t < N; ++t) {
    if (alpha[t] > 0) {
      model.alpha.push_back(alpha[t]);
      model.y.push_back(labels[static_cast<std::size_t>(t)]);
      model.support.push_back(x[static_cast<std::size_t>(t)]);
    }
  }
  return model;
}

/// Class by sign(f) with f = 0 mapped to +1.
inline SvmPrediction svm_predict(const SvmModel& model, std::span<const double> x) {
  const double f = model.decision(x);
  return {f >= 0.0 ? 1 : -1, f};
}

/// Dual objective W(alpha) over the training set, from the stored support
/// vectors (alpha = 0 elsewhere).
inline double svm_dual_objective(const SvmModel& model) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < model.alpha.size(); ++i) {
    lin += model.alpha[i];
    for (std::size_t j = 0; j < model.alpha.size(); ++j)
      quad += model.alpha[i] * model.alpha[j] * model.y[i] * model.y[j] * model.kernel(model.support[i], model.support[j]);
  }
  return lin - 0.5 * quad;
}

inline nlohmann::json to_json(const SvmModel& m) {
  return {{"format", "ppgbp-svm"},
          {"version", 1},
          {"kernel", m.kernel.kind == KernelKind::Linear ? "linear" : "rbf"},
          {"gamma", m.kernel.gamma},
          {"C", m.C},
          {"bias", m.bias},
          {"width", m.width},
          {"alpha", m.alpha},
          {"y", m.y},
          {"support", m.support}};
}

inline SvmModel svm_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ppgbp-svm") fail(ErrorCode::InvalidSpec, "not an svm file");
    SvmModel m;
    const auto k = j.at("kernel").get<std::string>();
    if (k != "linear" && k != "rbf") fail(ErrorCode::InvalidSpec, "unknown kernel " + k);
    m.kernel.kind = k == "linear" ? KernelKind::Linear : KernelKind::Rbf;
    m.kernel.gamma = j.at("gamma").get<double>();
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.width = j.at("width").get<std::size_t>();
    m.alpha = j.at("alpha").get<std::vector<double>>();
    m.y = j.at("y").get<std::vector<int>>();
    m.support = j.at("support").get<FeatureMatrix>();
    if (m.y.size() != m.alpha.size() || m.support.size() != m.alpha.size()) {
      fail(ErrorCode::InvalidSpec, "svm json: inconsistent support vector counts");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSpec, std::string("svm json: ") + e.what());
  }
}

}  // namespace ppgbp
