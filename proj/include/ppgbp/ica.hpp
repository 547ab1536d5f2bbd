#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <utility>

#include "ppgbp/error.hpp"
#include "ppgbp/rng.hpp"

namespace ppgbp {

/// Rows are observed channels, columns are time samples.
using ObservationMatrix = Eigen::MatrixXd;

/// Subtracts each row's mean. Returns (centered, means).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> ica_center(const ObservationMatrix& x) {
  if (x.cols() < 2) fail(ErrorCode::TooFewSamples, "need at least 2 samples per channel");
  Eigen::VectorXd mean = x.rowwise().mean();
  Eigen::MatrixXd centered = x.colwise() - mean;
  return {std::move(centered), std::move(mean)};
}

struct IcaOptions {
  int max_iterations = 500;
  double tolerance = 1e-6;
};

struct IcaModel {
  Eigen::VectorXd mean;        ///< E(X), per channel
  Eigen::MatrixXd whitening;   ///< c x n, maps centered data to unit covariance
  Eigen::MatrixXd rotation;    ///< c x c orthonormal unmixing in whitened space
  Eigen::MatrixXd unmixing;    ///< c x n, rotation * whitening
  Eigen::MatrixXd mixing;      ///< n x c, pseudo-inverse of unmixing (estimate of A)
  int iterations = 0;

  Eigen::MatrixXd whiten(const ObservationMatrix& x) const {
    return whitening * (x.colwise() - mean);
  }
  /// Estimated sources s = W (x - E(x)).
  Eigen::MatrixXd transform(const ObservationMatrix& x) const {
    return unmixing * (x.colwise() - mean);
  }
};

namespace detail {

/// W <- (W W^T)^{-1/2} W
inline Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

}  // namespace detail

/// Symmetric FastICA with the tanh contrast. Converges when every row
/// satisfies |1 - |<w_new, w_old>|| <= tolerance.
inline IcaModel fastica_fit(const ObservationMatrix& x, int n_components, std::uint64_t seed,
                            const IcaOptions& options = {}) {
  const auto n = x.rows();
  const auto t = x.cols();
  if (n_components < 1 || n_components > n) {
    fail(ErrorCode::InvalidSpec, "n_components must lie in [1, channels]");
  }
  auto [xc, mean] = ica_center(x);
  const auto c = static_cast<Eigen::Index>(n_components);

  const Eigen::MatrixXd cov = xc * xc.transpose() / static_cast<double>(t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // Eigenvalues come back ascending; keep the c largest.
  const Eigen::VectorXd evals = es.eigenvalues().tail(c).reverse();
  const Eigen::MatrixXd evecs = es.eigenvectors().rightCols(c).rowwise().reverse();
  const double largest = es.eigenvalues().maxCoeff();
  if (!(evals.minCoeff() > 1e-12 * std::max(largest, 1e-300))) {
    fail(ErrorCode::RankDeficient, "observation covariance is rank deficient");
  }

  IcaModel model;
  model.mean = mean;
  model.whitening = evals.cwiseSqrt().cwiseInverse().asDiagonal() * evecs.transpose();
  const Eigen::MatrixXd z = model.whitening * xc;

  Rng rng(seed);
  Eigen::MatrixXd w(c, c);
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = 0; j < c; ++j) w(i, j) = rng.normal();
  w = detail::symmetric_decorrelation(w);

  const double inv_t = 1.0 / static_cast<double>(t);
  bool converged = false;
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    const Eigen::MatrixXd g = (w * z).array().tanh().matrix();
    const Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().mean().matrix();
    Eigen::MatrixXd w_new = g * z.transpose() * inv_t - g_prime_mean.asDiagonal() * w;
    w_new = detail::symmetric_decorrelation(w_new);
    const double lim = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = std::move(w_new);
    if (lim <= options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    fail(ErrorCode::NoConvergence, "FastICA did not converge", options.max_iterations);
  }
  model.iterations = it;
  model.rotation = w;
  model.unmixing = w * model.whitening;
  model.mixing = model.unmixing.completeOrthogonalDecomposition().pseudoInverse();
  return model;
}

}  // namespace ppgbp
