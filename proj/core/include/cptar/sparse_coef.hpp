#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "cptar/tensor.hpp"

namespace cptar {

/// Position inside the lag-major coefficient [A]_n: response entry `row`,
/// lag `lag` (0 is the most recent), lagged entry `col`.
struct SparseIndex {
  std::size_t row = 0;
  std::size_t lag = 0;
  std::size_t col = 0;
  auto operator<=>(const SparseIndex&) const = default;
};

/// Sparse coefficient tensor of shape (q_1..q_n, P, q_1..q_n). Stored values
/// are never zero.
class SparseCoef {
 public:
  SparseCoef() = default;
  SparseCoef(Shape dims, std::size_t lag_order);
  /// Keeps the nonzero entries of a Q x PQ lag-major matrix.
  static SparseCoef from_matrix(const Shape& dims, std::size_t lag_order, const Matrix& m);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t lag_order() const noexcept { return lag_order_; }
  std::size_t total_dim() const noexcept { return q_; }
  /// (q_1..q_n, P, q_1..q_n).
  Shape tensor_shape() const;
  std::size_t num_positions() const noexcept { return lag_order_ * q_ * q_; }

  /// Setting zero erases the entry.
  void set(const SparseIndex& idx, double value);
  double get(const SparseIndex& idx) const;
  const std::map<SparseIndex, double>& entries() const noexcept { return entries_; }

  std::size_t support_size() const noexcept { return entries_.size(); }
  double l1_norm() const;
  double squared_norm() const;
  void scale(double c);

  Matrix to_matrix() const;
  /// A_S vec(X_t) for a lag-major stacked vector of length PQ.
  Vector apply(const Vector& stacked) const;
  /// Column-wise apply over a PQ x N matrix.
  Matrix apply(const Matrix& stacked) const;

  std::vector<std::size_t> multi_index(const SparseIndex& idx) const;
  SparseIndex from_multi_index(std::span<const std::size_t> index) const;

 private:
  void check(const SparseIndex& idx) const;

  Shape dims_;
  std::size_t lag_order_ = 1;
  std::size_t q_ = 0;
  std::map<SparseIndex, double> entries_;
};

}  // namespace cptar
