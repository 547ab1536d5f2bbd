#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include "ppgbp/error.hpp"

namespace ppgbp::nn {

/// Cache-line aligned storage. Eigen's vectorized kernels peel a different
/// number of leading elements depending on the start address, which changes
/// summation order; a fixed alignment keeps results bit-identical between
/// runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Row-major dense array. Activations flowing between layers are always
/// rank 3: {batch, channels, length}.
struct Tensor {
  std::vector<std::size_t> shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, Buffer values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != element_count(shape)) fail(ErrorCode::ShapeMismatch, "tensor data/shape mismatch");
  }
  Tensor(std::vector<std::size_t> s, const std::vector<double>& values)
      : Tensor(std::move(s), Buffer(values.begin(), values.end())) {}
  Tensor(std::vector<std::size_t> s, std::initializer_list<double> values)
      : Tensor(std::move(s), Buffer(values)) {}

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& at3(std::size_t b, std::size_t c, std::size_t l) {
    return data[(b * shape[1] + c) * shape[2] + l];
  }
  double at3(std::size_t b, std::size_t c, std::size_t l) const {
    return data[(b * shape[1] + c) * shape[2] + l];
  }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool operator==(const Tensor&) const = default;
};

/// Per-sample activation shape (channels x length).
struct FeatureShape {
  std::size_t channels = 1;
  std::size_t length = 1;

  std::size_t size() const { return channels * length; }
  bool operator==(const FeatureShape&) const = default;
};

inline std::string to_string(FeatureShape s) {
  return "[" + std::to_string(s.channels) + "x" + std::to_string(s.length) + "]";
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using ColMap = Eigen::Map<Eigen::MatrixXd>;
using ConstColMap = Eigen::Map<const Eigen::MatrixXd>;

/// Stacks per-sample [C x L] tensors into one {B, C, L} batch.
inline Tensor stack_batch(const std::vector<const Tensor*>& samples) {
  if (samples.empty()) fail(ErrorCode::Empty, "empty batch");
  const auto& s0 = samples.front()->shape;
  if (s0.size() != 2) fail(ErrorCode::ShapeMismatch, "samples must be rank 2 [C x L]");
  Tensor out({samples.size(), s0[0], s0[1]});
  const std::size_t n = s0[0] * s0[1];
  for (std::size_t b = 0; b < samples.size(); ++b) {
    if (samples[b]->shape != s0) fail(ErrorCode::ShapeMismatch, "inconsistent sample shapes");
    std::copy(samples[b]->data.begin(), samples[b]->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return out;
}

}  // namespace ppgbp::nn
