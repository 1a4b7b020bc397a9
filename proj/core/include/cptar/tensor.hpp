#pragma once

// Dense tensors and the multilinear-algebra primitives used throughout.
//
// Storage convention: first index fastest (column-major), both for tensors
// and for matrices. Under this convention vec(u1 o u2 o ... o un) equals the
// matching column of the Khatri-Rao chain Un (.) ... (.) U1.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cptar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;

/// Product of all entries; 1 for an empty shape. Throws dim_overflow when the
/// product does not fit in size_t.
std::size_t shape_product(std::span<const std::size_t> shape);

class DenseTensor {
 public:
  DenseTensor() = default;
  /// Zero tensor of the given shape.
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, Vector data);
  DenseTensor(Shape shape, std::initializer_list<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
  bool empty() const noexcept { return shape_.empty(); }

  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }

  /// Linear offset of a zero-based multi-index.
  std::size_t offset(std::span<const std::size_t> index) const;

  double operator()(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  double& operator()(std::span<const std::size_t> index) { return data_[offset(index)]; }
  double at(std::initializer_list<std::size_t> index) const {
    return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
  }
  double& at(std::initializer_list<std::size_t> index) {
    return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
  }

  double frobenius_norm() const { return data_.norm(); }
  double max_abs() const { return data_.size() ? data_.cwiseAbs().maxCoeff() : 0.0; }

  friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Vector data_;
};

/// Flat data in first-index-fastest order.
Vector vectorize(const DenseTensor& t);

/// Mode matricization X_(mode), zero-based `mode`. Rows index the chosen
/// mode; columns run over the remaining modes, first remaining index fastest.
Matrix mode_matricize(const DenseTensor& t, std::size_t mode);

/// Sequential matricization [X]_split: rows group modes [0, split), columns
/// group modes [split, order). Requires 1 <= split < order.
Matrix seq_matricize(const DenseTensor& t, std::size_t split);

/// Inverse of seq_matricize. `split` may be 0 or order (a pure reshape).
DenseTensor inv_seq_matricize(const Matrix& m, const Shape& shape, std::size_t split);

Matrix kronecker(const Matrix& a, const Matrix& b);

/// Column-wise Kronecker product; column r is kron(a.col(r), b.col(r)).
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Khatri-Rao chain F[n-1] (.) ... (.) F[0] over the factors whose index is
/// not `skip`. Returns a 1 x R matrix of ones when nothing remains.
Matrix khatri_rao_chain(std::span<const Matrix> factors, std::size_t skip = static_cast<std::size_t>(-1));

DenseTensor outer_rank1(std::span<const Vector> vectors);

/// Divides each column by its 2-norm. A column with zero (or non-finite)
/// norm raises ErrorCode::degenerate_factor.
Matrix col_norm(const Matrix& u);

struct LeastSquaresSolution {
  Matrix x;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

/// argmin_X ||rhs - design * X||_F, minimum-Frobenius-norm when the design
/// is rank deficient. Backed by a complete orthogonal decomposition.
LeastSquaresSolution solve_least_squares_ex(const Matrix& design, const Matrix& rhs);
Matrix solve_least_squares(const Matrix& design, const Matrix& rhs);

/// Number of nonzero entries.
std::size_t support_size(const DenseTensor& t);
std::size_t support_size(const Matrix& m);

/// Contracts every mode except `mode` of each column of `data` (a batch of
/// vectorized tensors with shape `dims`, one per column) against column `r`
/// of the corresponding factor. Result is dims[mode] x data.cols().
Matrix contract_all_but(const Matrix& data, std::span<const std::size_t> dims, std::size_t mode,
                        std::span<const Matrix> factors, Eigen::Index r);

/// Hadamard product of F_l^T F_l over l != skip; an all-ones R x R matrix
/// when nothing remains. Equals (chain)^T (chain) for the Khatri-Rao chain.
Matrix hadamard_gram(std::span<const Matrix> factors, std::size_t skip = static_cast<std::size_t>(-1));

}  // namespace cptar
