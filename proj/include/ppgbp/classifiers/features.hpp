#pragma once

#include <cmath>
#include <vector>

#include "ppgbp/error.hpp"

namespace ppgbp {

/// One row per sample; every row has the same width.
using FeatureMatrix = std::vector<std::vector<double>>;

namespace detail {

inline std::size_t check_features(const FeatureMatrix& x, std::size_t n_labels) {
  if (x.empty()) fail(ErrorCode::EmptyTrainingSet, "no training samples");
  if (x.size() != n_labels) fail(ErrorCode::LengthMismatch, "feature rows and labels differ in count");
  const std::size_t m = x.front().size();
  if (m == 0) fail(ErrorCode::ShapeMismatch, "zero-width feature rows");
  for (const auto& row : x) {
    if (row.size() != m) fail(ErrorCode::ShapeMismatch, "ragged feature matrix");
    for (double v : row)
      if (!std::isfinite(v)) fail(ErrorCode::ShapeMismatch, "non-finite feature value");
  }
  return m;
}

}  // namespace detail
}  // namespace ppgbp
