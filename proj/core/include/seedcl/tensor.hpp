#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace seedcl {

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using MatrixMap = Eigen::Map<Matrix<Real>>;
template <typename Real>
using ConstMatrixMap = Eigen::Map<const Matrix<Real>>;

/// Convolutional activations in channel-major layout [C][B][H][W]: the batch
/// is folded into the columns so a convolution is a single GEMM.
template <typename Real>
struct Activation {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<Real> data;

  Activation() = default;
  Activation(int c, int b, int h, int w) : channels(c), batch(b), height(h), width(w), data(static_cast<std::size_t>(c) * b * h * w) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t columns() const noexcept { return static_cast<std::size_t>(batch) * plane(); }
  Real& at(int c, int b, int y, int x) { return data[(static_cast<std::size_t>(c) * batch + b) * plane() + static_cast<std::size_t>(y) * width + x]; }
  Real at(int c, int b, int y, int x) const { return data[(static_cast<std::size_t>(c) * batch + b) * plane() + static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace seedcl
