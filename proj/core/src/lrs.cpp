#include "cptar/lrs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cptar/error.hpp"

namespace cptar {

// ---------------------------------------------------------------- SparseCoef

SparseCoef::SparseCoef(Shape dims, std::size_t lag_order)
    : dims_(std::move(dims)), lag_order_(lag_order), q_(shape_product(dims_)) {
  if (lag_order_ < 1) throw Error(ErrorCode::invalid_argument, "lag order must be >= 1", "SparseCoef");
  if (dims_.empty()) throw Error(ErrorCode::invalid_argument, "sparse coefficient needs response dims", "SparseCoef");
}

SparseCoef SparseCoef::from_matrix(const Shape& dims, std::size_t lag_order, const Matrix& m) {
  SparseCoef s(dims, lag_order);
  if (static_cast<std::size_t>(m.rows()) != s.q_ || static_cast<std::size_t>(m.cols()) != s.q_ * lag_order) {
    throw Error(ErrorCode::shape_mismatch, "matrix must be Q x PQ", "SparseCoef::from_matrix");
  }
  const auto q = static_cast<Eigen::Index>(s.q_);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m(r, c) != 0.0) {
        s.entries_.emplace(SparseIndex{static_cast<std::size_t>(r), static_cast<std::size_t>(c / q),
                                       static_cast<std::size_t>(c % q)},
                           m(r, c));
      }
    }
  }
  return s;
}

Shape SparseCoef::tensor_shape() const {
  Shape s = dims_;
  s.push_back(lag_order_);
  s.insert(s.end(), dims_.begin(), dims_.end());
  return s;
}

void SparseCoef::check(const SparseIndex& idx) const {
  if (idx.row >= q_ || idx.col >= q_ || idx.lag >= lag_order_) {
    throw Error(ErrorCode::index_out_of_range, "sparse index out of range", "SparseCoef");
  }
}

void SparseCoef::set(const SparseIndex& idx, double value) {
  check(idx);
  if (value == 0.0) {
    entries_.erase(idx);
  } else {
    entries_[idx] = value;
  }
}

double SparseCoef::get(const SparseIndex& idx) const {
  check(idx);
  auto it = entries_.find(idx);
  return it == entries_.end() ? 0.0 : it->second;
}

double SparseCoef::l1_norm() const {
  double s = 0.0;
  for (const auto& [_, v] : entries_) s += std::abs(v);
  return s;
}

double SparseCoef::squared_norm() const {
  double s = 0.0;
  for (const auto& [_, v] : entries_) s += v * v;
  return s;
}

void SparseCoef::scale(double c) {
  if (c == 0.0) {
    entries_.clear();
    return;
  }
  for (auto& [_, v] : entries_) v *= c;
}

Matrix SparseCoef::to_matrix() const {
  const auto q = static_cast<Eigen::Index>(q_);
  Matrix m = Matrix::Zero(q, q * static_cast<Eigen::Index>(lag_order_));
  for (const auto& [idx, v] : entries_) {
    m(static_cast<Eigen::Index>(idx.row), static_cast<Eigen::Index>(idx.lag * q_ + idx.col)) = v;
  }
  return m;
}

Vector SparseCoef::apply(const Vector& stacked) const {
  if (static_cast<std::size_t>(stacked.size()) != q_ * lag_order_) {
    throw Error(ErrorCode::shape_mismatch, "stacked vector must have length PQ", "SparseCoef::apply");
  }
  Vector out = Vector::Zero(static_cast<Eigen::Index>(q_));
  for (const auto& [idx, v] : entries_) {
    out[static_cast<Eigen::Index>(idx.row)] += v * stacked[static_cast<Eigen::Index>(idx.lag * q_ + idx.col)];
  }
  return out;
}

Matrix SparseCoef::apply(const Matrix& stacked) const {
  if (static_cast<std::size_t>(stacked.rows()) != q_ * lag_order_) {
    throw Error(ErrorCode::shape_mismatch, "stacked matrix must have PQ rows", "SparseCoef::apply");
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(q_), stacked.cols());
  for (const auto& [idx, v] : entries_) {
    out.row(static_cast<Eigen::Index>(idx.row)) += v * stacked.row(static_cast<Eigen::Index>(idx.lag * q_ + idx.col));
  }
  return out;
}

std::vector<std::size_t> SparseCoef::multi_index(const SparseIndex& idx) const {
  check(idx);
  std::vector<std::size_t> out;
  out.reserve(2 * dims_.size() + 1);
  auto unravel = [&](std::size_t lin) {
    for (auto d : dims_) {
      out.push_back(lin % d);
      lin /= d;
    }
  };
  unravel(idx.row);
  out.push_back(idx.lag);
  unravel(idx.col);
  return out;
}

SparseIndex SparseCoef::from_multi_index(std::span<const std::size_t> index) const {
  const std::size_t n = dims_.size();
  if (index.size() != 2 * n + 1) {
    throw Error(ErrorCode::index_out_of_range, "sparse multi-index has the wrong arity", "SparseCoef");
  }
  auto ravel = [&](std::span<const std::size_t> part) {
    std::size_t lin = 0, stride = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (part[i] >= dims_[i]) throw Error(ErrorCode::index_out_of_range, "sparse multi-index out of range");
      lin += part[i] * stride;
      stride *= dims_[i];
    }
    return lin;
  };
  SparseIndex idx{ravel(index.first(n)), index[n], ravel(index.subspan(n + 1))};
  check(idx);
  return idx;
}

// ---------------------------------------------------------------- trimming

Matrix trim(const Matrix& m, double zeta) {
  if (!(zeta >= 0.0)) throw Error(ErrorCode::invalid_argument, "trim level must be >= 0", "trim");
  return m.cwiseMax(-zeta).cwiseMin(zeta);
}

DenseTensor trim(const DenseTensor& t, double zeta) {
  if (!(zeta >= 0.0)) throw Error(ErrorCode::invalid_argument, "trim level must be >= 0", "trim");
  return DenseTensor(t.shape(), Vector(t.data().cwiseMax(-zeta).cwiseMin(zeta)));
}

// ---------------------------------------------------------------- Lasso

LassoProblem make_lasso_problem(const RegressionData& data) {
  if (data.variant != ModelVariant::ar_shared_lags) {
    throw Error(ErrorCode::invalid_argument, "sparse estimation is defined for the shared-lag AR model",
                "make_lasso_problem");
  }
  const Matrix x = stacked_covariates(data);
  const double n = static_cast<double>(data.samples());
  LassoProblem p;
  p.gram = (x * x.transpose()) / n;
  p.cross = (data.responses * x.transpose()) / n;
  p.dims = data.response_dims;
  p.lag_order = data.lag_order;
  p.samples = data.samples();
  return p;
}

namespace {

void check_fixed(const LassoProblem& problem, const Matrix& fixed) {
  if (fixed.rows() != problem.cross.rows() || fixed.cols() != problem.cross.cols()) {
    throw Error(ErrorCode::shape_mismatch, "fixed low-rank part must be Q x PQ", "lasso_step");
  }
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

}  // namespace

double lambda_max(const LassoProblem& problem, const Matrix& fixed_lowrank) {
  check_fixed(problem, fixed_lowrank);
  const Matrix c = problem.cross - fixed_lowrank * problem.gram;
  return 2.0 * c.cwiseAbs().maxCoeff();
}

SparseCoef lasso_step(const LassoProblem& problem, const Matrix& fixed_lowrank, double lambda,
                      const LassoOptions& options, const SparseCoef* warm_start, std::size_t* sweeps_used) {
  check_fixed(problem, fixed_lowrank);
  if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "lambda must be >= 0", "lasso_step");
  const auto& gram = problem.gram;
  const Eigen::Index rows = problem.cross.rows();
  const Eigen::Index cols = problem.cross.cols();

  // Row i of [S]_n is column i of the transposed working arrays, keeping
  // each per-row sweep contiguous.
  const Matrix ct = (problem.cross - fixed_lowrank * gram).transpose();
  Matrix at = warm_start ? Matrix(warm_start->to_matrix().transpose()) : Matrix::Zero(cols, rows);
  if (at.rows() != cols || at.cols() != rows) {
    throw Error(ErrorCode::shape_mismatch, "warm start does not match the problem", "lasso_step");
  }
  Matrix agt = gram * at;  // column i = Sigma a_i
  const Vector diag = gram.diagonal();
  const double half_lambda = 0.5 * lambda;

  std::size_t sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto a = at.col(i);
      auto ag = agt.col(i);
      const auto c = ct.col(i);
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double s = diag[j];
        const double old = a[j];
        double updated = 0.0;
        if (s > 0.0) {
          // Minimizer of s a^2 - 2 rho a + lambda |a|.
          const double rho = c[j] - ag[j] + old * s;
          updated = soft_threshold(rho, half_lambda) / s;
        }
        const double d = updated - old;
        if (d != 0.0) {
          a[j] = updated;
          ag.noalias() += d * gram.col(j);
          max_change = std::max(max_change, std::abs(d));
        }
      }
    }
    if (max_change < options.tol) {
      ++sweep;
      break;
    }
  }
  if (sweeps_used) *sweeps_used = sweep;
  return SparseCoef::from_matrix(problem.dims, problem.lag_order, at.transpose());
}

SparseCoef lasso_step(const TensorSeries& series, std::size_t lag_order, const Matrix& fixed_lowrank, double lambda,
                      const LassoOptions& options) {
  return lasso_step(make_lasso_problem(make_ar_data(series, lag_order)), fixed_lowrank, lambda, options);
}

// ---------------------------------------------------------------- LRS fit

double LrsConfig::resolved_alpha(std::size_t lag_order, std::size_t q) const {
  if (alpha_l) return *alpha_l;
  return std::sqrt(static_cast<double>(lag_order)) * static_cast<double>(q);
}

double LrsConfig::zeta(std::size_t lag_order, std::size_t q) const {
  const double qd = static_cast<double>(q);
  return resolved_alpha(lag_order, q) / (static_cast<double>(lag_order) * qd * qd);
}

void LrsConfig::validate() const {
  if (!(lambda > 0.0)) throw Error(ErrorCode::config_error, "lambda must be > 0");
  if (alpha_l && !(*alpha_l > 0.0)) throw Error(ErrorCode::config_error, "alpha_L must be > 0");
  if (outer_iters < 1) throw Error(ErrorCode::config_error, "outer_iters must be >= 1");
  if (!(outer_tol > 0.0)) throw Error(ErrorCode::config_error, "outer tolerance must be > 0");
  if (!(lasso.tol > 0.0) || lasso.max_sweeps < 1) throw Error(ErrorCode::config_error, "invalid lasso settings");
  als.validate();
}

PenalizedObjective penalized_objective(const Matrix& lowrank, const SparseCoef& sparse, const RegressionData& data,
                                       double lambda, double zeta) {
  PenalizedObjective out;
  out.loss = loss(Matrix(lowrank + sparse.to_matrix()), data);
  out.penalty = lambda * sparse.l1_norm();
  out.value = out.loss + out.penalty;
  out.lowrank_max_abs = lowrank.size() ? lowrank.cwiseAbs().maxCoeff() : 0.0;
  out.lowrank_constraint_ok = out.lowrank_max_abs <= zeta;
  return out;
}

PenalizedObjective penalized_objective(const Matrix& lowrank, const SparseCoef& sparse, const TensorSeries& series,
                                       std::size_t lag_order, double lambda, double zeta) {
  return penalized_objective(lowrank, sparse, make_ar_data(series, lag_order), lambda, zeta);
}

namespace {

RegressionData residual_data(const RegressionData& data, const SparseCoef& sparse) {
  RegressionData out = data;
  const std::size_t q = sparse.total_dim();
  for (const auto& [idx, v] : sparse.entries()) {
    out.responses.row(static_cast<Eigen::Index>(idx.row)) -=
        v * data.covariates[idx.lag].row(static_cast<Eigen::Index>(idx.col));
  }
  (void)q;
  return out;
}

}  // namespace

LrsResult lrs_fit(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, const LrsConfig& config,
                  const LrsWarmStart* warm) {
  config.validate();
  const std::size_t q = shape_product(data.response_dims);
  const LassoProblem problem = make_lasso_problem(data);

  LrsResult res;
  res.zeta = config.zeta(data.lag_order, q);

  AlsState state;
  SparseCoef sparse(data.response_dims, data.lag_order);
  if (warm) {
    state = warm->lowrank;
    sparse = warm->sparse;
  } else {
    Rng rng = make_stream(config.als.rng_seed, {0, 0});
    state = random_init(data, rank_y, rank_x, rng);
  }

  AlsConfig warm_als = config.als;
  warm_als.num_restarts = 1;
  double prev = 0.0;
  for (std::size_t k = 0; k < config.outer_iters; ++k) {
    const Matrix trimmed = trim(assemble_state(state, data), res.zeta);
    sparse = lasso_step(problem, trimmed, config.lambda, config.lasso, &sparse);

    const RegressionData resid = residual_data(data, sparse);
    AlsResult als = (k == 0 && !warm) ? als_fit(resid, rank_y, rank_x, config.als)
                                      : als_fit_from(resid, std::move(state), warm_als);
    state = std::move(als.state);
    res.als_report = std::move(als.report);

    const double obj =
        penalized_objective(assemble_state(state, data), sparse, data, config.lambda, res.zeta).value;
    res.objective_trace.push_back(obj);
    res.outer_iterations = k + 1;
    if (k > 0 && std::abs(prev - obj) / std::max(prev, 1e-12) < config.outer_tol) {
      res.converged = true;
      break;
    }
    prev = obj;
  }

  const Matrix lowrank = assemble_state(state, data);
  res.constraint_satisfied = lowrank.cwiseAbs().maxCoeff() <= res.zeta;
  res.lowrank = coef_from_state(state, data);
  res.sparse = std::move(sparse);
  res.state = std::move(state);
  return res;
}

LrsResult lrs_fit(const TensorSeries& series, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x,
                  const LrsConfig& config) {
  return lrs_fit(make_ar_data(series, lag_order), rank_y, rank_x, config);
}

}  // namespace cptar
