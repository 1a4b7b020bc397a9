#include "cptar/tensor.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cptar/error.hpp"

namespace cptar {

namespace {

std::string shape_string(std::span<const std::size_t> shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

// kron(F[hi-1].col(r), ..., F[lo].col(r)); length prod of rows, 1 if empty.
Vector kron_column_range(std::span<const Matrix> factors, std::size_t lo, std::size_t hi, Eigen::Index r) {
  Vector out = Vector::Ones(1);
  for (std::size_t l = lo; l < hi; ++l) {
    const auto col = factors[l].col(r);
    Vector next(out.size() * col.size());
    // New mode is slower than everything accumulated so far.
    for (Eigen::Index b = 0; b < col.size(); ++b) {
      next.segment(b * out.size(), out.size()) = col[b] * out;
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t p = 1;
  for (auto d : shape) {
    if (d != 0 && p > std::numeric_limits<std::size_t>::max() / d) {
      throw Error(ErrorCode::dim_overflow, "shape product overflows size_t", shape_string(shape));
    }
    p *= d;
  }
  return p;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(ErrorCode::invalid_argument, "tensor dimensions must be >= 1", shape_string(shape_));
  }
  data_ = Vector::Zero(static_cast<Eigen::Index>(shape_product(shape_)));
}

DenseTensor::DenseTensor(Shape shape, Vector data) : DenseTensor(std::move(shape)) {
  if (data.size() != data_.size()) {
    throw Error(ErrorCode::shape_mismatch,
                "data length " + std::to_string(data.size()) + " does not match shape",
                shape_string(shape_));
  }
  data_ = std::move(data);
}

DenseTensor::DenseTensor(Shape shape, std::initializer_list<double> data)
    : DenseTensor(std::move(shape), Eigen::Map<const Vector>(data.begin(), static_cast<Eigen::Index>(data.size()))) {}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorCode::index_out_of_range, "index arity does not match tensor order", shape_string(shape_));
  }
  std::size_t off = 0;
  std::size_t stride = 1;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) {
      throw Error(ErrorCode::index_out_of_range, "index out of range", shape_string(shape_));
    }
    off += index[i] * stride;
    stride *= shape_[i];
  }
  return off;
}

Vector vectorize(const DenseTensor& t) { return t.data(); }

Matrix mode_matricize(const DenseTensor& t, std::size_t mode) {
  const auto& dims = t.shape();
  if (mode >= dims.size()) {
    throw Error(ErrorCode::index_out_of_range, "mode " + std::to_string(mode) + " out of range", shape_string(dims));
  }
  std::size_t left = 1, right = 1;
  for (std::size_t l = 0; l < mode; ++l) left *= dims[l];
  for (std::size_t l = mode + 1; l < dims.size(); ++l) right *= dims[l];
  const std::size_t d = dims[mode];
  Matrix out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(left * right));
  const double* src = t.data().data();
  for (std::size_t b = 0; b < right; ++b) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t a = 0; a < left; ++a) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a + left * b)) = src[a + left * (i + d * b)];
      }
    }
  }
  return out;
}

Matrix seq_matricize(const DenseTensor& t, std::size_t split) {
  const auto& dims = t.shape();
  if (split < 1 || split >= dims.size()) {
    throw Error(ErrorCode::index_out_of_range, "split point " + std::to_string(split) + " out of range",
                shape_string(dims));
  }
  const auto rows = shape_product(std::span(dims).first(split));
  const auto cols = shape_product(std::span(dims).subspan(split));
  return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

DenseTensor inv_seq_matricize(const Matrix& m, const Shape& shape, std::size_t split) {
  if (split > shape.size()) {
    throw Error(ErrorCode::index_out_of_range, "split point out of range", shape_string(shape));
  }
  const auto rows = shape_product(std::span(shape).first(split));
  const auto cols = shape_product(std::span(shape).subspan(split));
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    throw Error(ErrorCode::shape_mismatch,
                "matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                    std::to_string(rows) + "x" + std::to_string(cols),
                shape_string(shape));
  }
  return DenseTensor(shape, Eigen::Map<const Vector>(m.data(), m.size()));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::shape_mismatch,
                "khatri_rao column counts differ: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
    }
  }
  return out;
}

Matrix khatri_rao_chain(std::span<const Matrix> factors, std::size_t skip) {
  if (factors.empty()) throw Error(ErrorCode::invalid_argument, "khatri_rao_chain needs at least one factor");
  const Eigen::Index r = factors.front().cols();
  Matrix out = Matrix::Ones(1, r);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    if (l == skip) continue;
    out = khatri_rao(factors[l], out);
  }
  return out;
}

DenseTensor outer_rank1(std::span<const Vector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::invalid_argument, "outer_rank1 needs at least one vector");
  Shape shape;
  Vector data = Vector::Ones(1);
  for (const auto& v : vectors) {
    if (v.size() == 0) throw Error(ErrorCode::invalid_argument, "outer_rank1 vectors must be nonempty");
    shape.push_back(static_cast<std::size_t>(v.size()));
    Vector next(data.size() * v.size());
    for (Eigen::Index b = 0; b < v.size(); ++b) next.segment(b * data.size(), data.size()) = v[b] * data;
    data = std::move(next);
  }
  return DenseTensor(std::move(shape), std::move(data));
}

Matrix col_norm(const Matrix& u) {
  Matrix out = u;
  for (Eigen::Index r = 0; r < u.cols(); ++r) {
    const double n = u.col(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::degenerate_factor, "column " + std::to_string(r) + " has zero or non-finite norm",
                  "col_norm");
    }
    out.col(r) /= n;
  }
  return out;
}

LeastSquaresSolution solve_least_squares_ex(const Matrix& design, const Matrix& rhs) {
  if (design.rows() != rhs.rows()) {
    throw Error(ErrorCode::shape_mismatch, "design and rhs row counts differ", "solve_least_squares");
  }
  LeastSquaresSolution sol;
  if (design.cols() == 0) {
    sol.x = Matrix::Zero(0, rhs.cols());
    return sol;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
  sol.x = cod.solve(rhs);
  sol.rank = cod.rank();
  sol.rank_deficient = sol.rank < design.cols();
  return sol;
}

Matrix solve_least_squares(const Matrix& design, const Matrix& rhs) { return solve_least_squares_ex(design, rhs).x; }

std::size_t support_size(const DenseTensor& t) {
  return static_cast<std::size_t>((t.data().array() != 0.0).count());
}

std::size_t support_size(const Matrix& m) { return static_cast<std::size_t>((m.array() != 0.0).count()); }

Matrix contract_all_but(const Matrix& data, std::span<const std::size_t> dims, std::size_t mode,
                        std::span<const Matrix> factors, Eigen::Index r) {
  if (mode >= dims.size() || factors.size() != dims.size()) {
    throw Error(ErrorCode::invalid_argument, "contract_all_but: mode/factor count mismatch");
  }
  const auto q = shape_product(dims);
  if (static_cast<std::size_t>(data.rows()) != q) {
    throw Error(ErrorCode::shape_mismatch, "contract_all_but: data rows do not match dims", shape_string(dims));
  }
  std::size_t left = 1, right = 1;
  for (std::size_t l = 0; l < mode; ++l) left *= dims[l];
  for (std::size_t l = mode + 1; l < dims.size(); ++l) right *= dims[l];
  const auto d = static_cast<Eigen::Index>(dims[mode]);
  const Eigen::Index n = data.cols();

  const Vector w_left = kron_column_range(factors, 0, mode, r);
  const Vector w_right = kron_column_range(factors, mode + 1, dims.size(), r);

  // Contract the leading modes for every column at once.
  const auto lead = static_cast<Eigen::Index>(left);
  Eigen::Map<const Matrix> as_left(data.data(), lead, static_cast<Eigen::Index>(q / left) * n);
  const Eigen::RowVectorXd partial = w_left.transpose() * as_left;

  Matrix out(d, n);
  const auto trail = static_cast<Eigen::Index>(right);
  for (Eigen::Index t = 0; t < n; ++t) {
    Eigen::Map<const Matrix> block(partial.data() + t * d * trail, d, trail);
    out.col(t).noalias() = block * w_right;
  }
  return out;
}

Matrix hadamard_gram(std::span<const Matrix> factors, std::size_t skip) {
  if (factors.empty()) throw Error(ErrorCode::invalid_argument, "hadamard_gram needs at least one factor");
  const Eigen::Index r = factors.front().cols();
  Matrix out = Matrix::Ones(r, r);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    if (l == skip) continue;
    out.array() *= (factors[l].transpose() * factors[l]).array();
  }
  return out;
}

}  // namespace cptar
