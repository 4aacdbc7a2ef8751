#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seedcl/tensor.hpp"

namespace seedcl {

/// Fixed-capacity FIFO of L2-normalized key vectors.
template <typename Real>
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

  /// Normalizes and appends each row, evicting the oldest entries beyond
  /// capacity. Throws BatchTooLarge when rows > capacity, ZeroVector on a
  /// zero row, ShapeMismatch on a width other than dim.
  void push(const Matrix<Real>& keys);

  /// i = 0 is the oldest stored key.
  std::span<const Real> at(std::size_t i) const;
  /// Stored keys, oldest first, one per row.
  Matrix<Real> snapshot() const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::vector<Real> slots_;
};

}  // namespace seedcl
