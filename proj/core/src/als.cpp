#include "cptar/als.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cptar/error.hpp"
#include "cptar/parallel.hpp"

namespace cptar {

namespace {

// Relative pivot threshold for normal-equation solves. Eigenvalues of a Gram
// matrix are squared singular values of the design, so this treats design
// directions below ~1e-6 of the largest as rank deficient.
constexpr double kNormalEqThreshold = 1e-12;

struct NormalSolve {
  Matrix x;
  bool rank_deficient = false;
};

// Minimum-norm solution of gram * X = rhs with gram symmetric PSD and rhs in
// its range; this is the minimum-norm least-squares solution of the
// originating regression. Callers add one refinement step whose right-hand
// side comes from the data-space residual, which removes most of the error
// that forming the Gram matrix introduces.
NormalSolve solve_normal(const Matrix& gram, const Matrix& rhs) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  cod.setThreshold(kNormalEqThreshold);
  cod.compute(gram);
  return {cod.solve(rhs), cod.rank() < gram.cols()};
}

// F: (L R_x) x N covariate features, block k = Lambda_x^T Z_k.
Matrix covariate_features(const Matrix& lambda_x, const RegressionData& data) {
  const auto rx = lambda_x.cols();
  const auto n = data.responses.cols();
  Matrix f(rx * static_cast<Eigen::Index>(data.num_blocks()), n);
  for (std::size_t k = 0; k < data.num_blocks(); ++k) {
    f.middleRows(static_cast<Eigen::Index>(k) * rx, rx).noalias() = lambda_x.transpose() * data.covariates[k];
  }
  return f;
}

void check_state(const AlsState& s, const RegressionData& data) {
  if (s.response_factors.size() != data.response_dims.size() ||
      s.covariate_factors.size() != data.covariate_dims.size()) {
    throw Error(ErrorCode::shape_mismatch, "ALS state order does not match the data", "als");
  }
  const auto ry = s.response_factors.front().cols();
  const auto rx = s.covariate_factors.front().cols();
  for (std::size_t i = 0; i < s.response_factors.size(); ++i) {
    if (static_cast<std::size_t>(s.response_factors[i].rows()) != data.response_dims[i] ||
        s.response_factors[i].cols() != ry) {
      throw Error(ErrorCode::shape_mismatch, "response factor " + std::to_string(i) + " has the wrong shape", "als");
    }
  }
  for (std::size_t j = 0; j < s.covariate_factors.size(); ++j) {
    if (static_cast<std::size_t>(s.covariate_factors[j].rows()) != data.covariate_dims[j] ||
        s.covariate_factors[j].cols() != rx) {
      throw Error(ErrorCode::shape_mismatch, "covariate factor " + std::to_string(j) + " has the wrong shape", "als");
    }
  }
  if (s.core.rows() != ry || s.core.cols() != rx * static_cast<Eigen::Index>(data.num_blocks())) {
    throw Error(ErrorCode::shape_mismatch, "core has the wrong shape", "als");
  }
}

}  // namespace

void AlsConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorCode::config_error, "max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw Error(ErrorCode::config_error, "rel_tol must be > 0");
  if (num_restarts < 1) throw Error(ErrorCode::config_error, "num_restarts must be >= 1");
}

RegressionData make_ar_data(const TensorSeries& series, std::size_t lag_order, ModelVariant variant) {
  if (lag_order < 1) throw Error(ErrorCode::invalid_argument, "lag order must be >= 1");
  if (variant == ModelVariant::regression) {
    throw Error(ErrorCode::invalid_argument, "regression variant needs explicit covariates", "make_ar_data");
  }
  const std::size_t t_len = series.length();
  if (t_len <= lag_order) {
    throw Error(ErrorCode::invalid_argument,
                "series length " + std::to_string(t_len) + " must exceed lag order " + std::to_string(lag_order));
  }
  const Matrix all = series.as_columns();
  const auto p = static_cast<Eigen::Index>(lag_order);
  const Eigen::Index n = static_cast<Eigen::Index>(t_len) - p;
  const Eigen::Index q = all.rows();

  RegressionData d;
  d.response_dims = series.dims();
  d.variant = variant;
  d.lag_order = lag_order;
  d.responses = all.rightCols(n);
  if (variant == ModelVariant::ar_shared_lags) {
    d.covariate_dims = series.dims();
    for (Eigen::Index k = 0; k < p; ++k) d.covariates.push_back(all.middleCols(p - k - 1, n));
  } else {
    d.covariate_dims = Shape{lag_order};
    d.covariate_dims.insert(d.covariate_dims.end(), series.dims().begin(), series.dims().end());
    Matrix z(p * q, n);
    for (Eigen::Index t = 0; t < n; ++t) {
      for (Eigen::Index k = 0; k < p; ++k) {
        const auto src = all.col(p + t - k - 1);
        for (Eigen::Index i = 0; i < q; ++i) z(k + p * i, t) = src[i];
      }
    }
    d.covariates.push_back(std::move(z));
  }
  return d;
}

RegressionData make_regression_data(const TensorSeries& responses, const TensorSeries& covariates) {
  if (responses.length() != covariates.length()) {
    throw Error(ErrorCode::shape_mismatch, "responses and covariates differ in length", "make_regression_data");
  }
  RegressionData d;
  d.response_dims = responses.dims();
  d.covariate_dims = covariates.dims();
  d.variant = ModelVariant::regression;
  d.lag_order = 1;
  d.responses = responses.as_columns();
  d.covariates.push_back(covariates.as_columns());
  return d;
}

Matrix stacked_covariates(const RegressionData& data) {
  if (data.variant == ModelVariant::ar_shared_lags) {
    const auto q = data.covariates.front().rows();
    Matrix x(q * static_cast<Eigen::Index>(data.num_blocks()), data.responses.cols());
    for (std::size_t k = 0; k < data.num_blocks(); ++k) {
      x.middleRows(static_cast<Eigen::Index>(k) * q, q) = data.covariates[k];
    }
    return x;
  }
  if (data.variant == ModelVariant::stacked_lag_mode) {
    const auto& z = data.covariates.front();
    const auto p = static_cast<Eigen::Index>(data.lag_order);
    const Eigen::Index q = z.rows() / p;
    Matrix x(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index k = 0; k < p; ++k) x.row(k * q + i) = z.row(k + p * i);
    }
    return x;
  }
  return data.covariates.front();
}

AlsState state_from_coef(const LowRankCoef& coef) {
  return {coef.response_loadings().factors(), coef.covariate_loadings().factors(), coef.core()};
}

LowRankCoef coef_from_state(const AlsState& state, const RegressionData& data) {
  return LowRankCoef(CPLoadingSet(state.response_factors), CPLoadingSet(state.covariate_factors), state.core,
                     data.lag_order, data.variant);
}

Matrix assemble_state(const AlsState& state, const RegressionData& data) {
  const Matrix ly = khatri_rao_chain(state.response_factors);
  const Matrix lx = khatri_rao_chain(state.covariate_factors);
  const auto rx = lx.cols();
  const auto l = static_cast<Eigen::Index>(data.num_blocks());
  const Matrix lyg = ly * state.core;
  Matrix stacked(ly.rows(), l * lx.rows());
  for (Eigen::Index k = 0; k < l; ++k) {
    stacked.middleCols(k * lx.rows(), lx.rows()).noalias() = lyg.middleCols(k * rx, rx) * lx.transpose();
  }
  if (data.variant != ModelVariant::stacked_lag_mode) return stacked;
  const auto p = static_cast<Eigen::Index>(data.lag_order);
  const Eigen::Index q = stacked.cols() / p;
  Matrix out(stacked.rows(), stacked.cols());
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) out.col(k * q + i) = stacked.col(k + p * i);
  }
  return out;
}

double loss(const Matrix& coef, const TensorSeries& series, std::size_t lag_order) {
  if (series.length() <= lag_order) {
    throw Error(ErrorCode::invalid_argument, "loss requires T > P", "loss");
  }
  const auto q = static_cast<Eigen::Index>(series.total_dim());
  const auto p = static_cast<Eigen::Index>(lag_order);
  if (coef.rows() != q || coef.cols() != p * q) {
    throw Error(ErrorCode::shape_mismatch, "coefficient must be Q x PQ", "loss");
  }
  const Matrix all = series.as_columns();
  const Eigen::Index n = all.cols() - p;
  double total = 0.0;
  Vector x(p * q);
  for (Eigen::Index t = p; t < all.cols(); ++t) {
    for (Eigen::Index k = 0; k < p; ++k) x.segment(k * q, q) = all.col(t - k - 1);
    total += (all.col(t) - coef * x).squaredNorm();
  }
  return total / static_cast<double>(n);
}

double loss(const Matrix& coef, const RegressionData& data) {
  const Matrix x = stacked_covariates(data);
  if (coef.rows() != data.responses.rows() || coef.cols() != x.rows()) {
    throw Error(ErrorCode::shape_mismatch, "coefficient does not match the data", "loss");
  }
  return (data.responses - coef * x).squaredNorm() / static_cast<double>(data.samples());
}

double loss(const AlsState& state, const RegressionData& data) {
  check_state(state, data);
  const Matrix ly = khatri_rao_chain(state.response_factors);
  const Matrix lx = khatri_rao_chain(state.covariate_factors);
  const Matrix f = covariate_features(lx, data);
  Matrix resid = data.responses;
  resid.noalias() -= ly * (state.core * f);
  return resid.squaredNorm() / static_cast<double>(data.samples());
}

BlockUpdate update_u_block(const AlsState& state, std::size_t mode, const RegressionData& data) {
  check_state(state, data);
  if (mode >= state.response_factors.size()) {
    throw Error(ErrorCode::index_out_of_range, "response mode out of range", "update_u_block");
  }
  const auto& us = state.response_factors;
  const auto ry = us.front().cols();
  const Matrix lx = khatri_rao_chain(state.covariate_factors);
  // x_tilde_t = G (I_L (x) Lambda_x^T) vec(X_t), one column per sample.
  const Matrix xt = state.core * covariate_features(lx, data);

  // Normal equations U_i A = B with A = (sum x~ x~^T) o H_{-i} and
  // B[:, r] = (sum_t x~_t[r] Y_t)_(i) w_r.
  const Matrix a = (xt * xt.transpose()).cwiseProduct(hadamard_gram(us, mode));
  auto rhs = [&](const Matrix& responses) {
    const Matrix weighted = responses * xt.transpose();  // Q x R_y
    Matrix b(us[mode].rows(), ry);
    for (Eigen::Index r = 0; r < ry; ++r) {
      b.col(r) = contract_all_but(weighted.col(r), data.response_dims, mode, us, r);
    }
    return Matrix(b.transpose());
  };
  auto sol = solve_normal(a, rhs(data.responses));
  std::vector<Matrix> trial = us;
  trial[mode] = sol.x.transpose();
  const Matrix resid = data.responses - khatri_rao_chain(trial) * xt;
  sol.x += solve_normal(a, rhs(resid)).x;
  return {sol.x.transpose(), sol.rank_deficient};
}

BlockUpdate update_v_block(const AlsState& state, std::size_t mode, const RegressionData& data) {
  check_state(state, data);
  if (mode >= state.covariate_factors.size()) {
    throw Error(ErrorCode::index_out_of_range, "covariate mode out of range", "update_v_block");
  }
  const auto& vs = state.covariate_factors;
  const auto rx = vs.front().cols();
  const auto qj = vs[mode].rows();
  const auto blocks = static_cast<Eigen::Index>(data.num_blocks());
  const Eigen::Index n = data.responses.cols();

  const Matrix ly = khatri_rao_chain(state.response_factors);
  const Matrix k_gram = hadamard_gram(state.response_factors);  // Lambda_y^T Lambda_y

  // c_{t,k,r}: block k of sample t contracted on every mode but `mode`
  // against v_r. Row block (k * R_x + r) of `c`.
  Matrix c(blocks * rx * qj, n);
  for (Eigen::Index k = 0; k < blocks; ++k) {
    for (Eigen::Index r = 0; r < rx; ++r) {
      c.middleRows((k * rx + r) * qj, qj) =
          contract_all_but(data.covariates[static_cast<std::size_t>(k)], data.covariate_dims, mode, vs, r);
    }
  }
  const Matrix c_gram = c * c.transpose();

  // G~_r = (G_{1,r}, ..., G_{L,r}).
  std::vector<Matrix> g_tilde(static_cast<std::size_t>(rx), Matrix(state.core.rows(), blocks));
  for (Eigen::Index r = 0; r < rx; ++r) {
    for (Eigen::Index k = 0; k < blocks; ++k) g_tilde[static_cast<std::size_t>(r)].col(k) = state.core.col(k * rx + r);
  }

  Matrix normal = Matrix::Zero(qj * rx, qj * rx);
  for (Eigen::Index r = 0; r < rx; ++r) {
    const auto& gr = g_tilde[static_cast<std::size_t>(r)];
    for (Eigen::Index s = 0; s < rx; ++s) {
      const Matrix m = gr.transpose() * k_gram * g_tilde[static_cast<std::size_t>(s)];  // L x L
      auto blk = normal.block(r * qj, s * qj, qj, qj);
      for (Eigen::Index k = 0; k < blocks; ++k) {
        for (Eigen::Index l = 0; l < blocks; ++l) {
          blk.noalias() += m(k, l) * c_gram.block((k * rx + r) * qj, (l * rx + s) * qj, qj, qj);
        }
      }
    }
  }
  auto rhs = [&](const Matrix& responses) {
    const Matrix psi = ly.transpose() * responses;  // R_y x N
    Vector out = Vector::Zero(qj * rx);
    for (Eigen::Index r = 0; r < rx; ++r) {
      const Matrix proj = g_tilde[static_cast<std::size_t>(r)].transpose() * psi;  // L x N
      for (Eigen::Index k = 0; k < blocks; ++k) {
        out.segment(r * qj, qj).noalias() += c.middleRows((k * rx + r) * qj, qj) * proj.row(k).transpose();
      }
    }
    return out;
  };
  auto sol = solve_normal(normal, rhs(data.responses));
  std::vector<Matrix> trial = vs;
  trial[static_cast<std::size_t>(mode)] = Eigen::Map<const Matrix>(sol.x.data(), qj, rx);
  const Matrix resid =
      data.responses - ly * (state.core * covariate_features(khatri_rao_chain(trial), data));
  sol.x += solve_normal(normal, rhs(resid)).x;
  Matrix v = Eigen::Map<const Matrix>(sol.x.data(), qj, rx);
  return {std::move(v), sol.rank_deficient};
}

BlockUpdate update_g(const AlsState& state, const RegressionData& data) {
  check_state(state, data);
  const Matrix ly = khatri_rao_chain(state.response_factors);
  const Matrix lx = khatri_rao_chain(state.covariate_factors);
  const Matrix f = covariate_features(lx, data);
  const Matrix k_gram = hadamard_gram(state.response_factors);
  const Matrix ff = f * f.transpose();
  // G = K^+ (Lambda_y^T Y F^T) (F F^T)^+ is the minimum-norm solution of the
  // Kronecker-structured design (F^T (x) Lambda_y).
  auto solve = [&](const Matrix& responses, bool* deficient) {
    const Matrix cross = (ly.transpose() * responses) * f.transpose();  // R_y x L R_x
    auto left = solve_normal(k_gram, cross);
    auto right = solve_normal(ff, left.x.transpose());
    if (deficient) *deficient = left.rank_deficient || right.rank_deficient;
    return Matrix(right.x.transpose());
  };
  bool deficient = false;
  Matrix g = solve(data.responses, &deficient);
  g += solve(data.responses - ly * (g * f), nullptr);
  return {std::move(g), deficient};
}

AlsState random_init(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, Rng& rng) {
  if (rank_y < 1 || rank_x < 1) throw Error(ErrorCode::invalid_argument, "ranks must be >= 1", "random_init");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](std::size_t rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
    return col_norm(m);
  };
  AlsState s;
  for (auto q : data.response_dims) s.response_factors.push_back(draw(q, rank_y));
  for (auto p : data.covariate_dims) s.covariate_factors.push_back(draw(p, rank_x));
  s.core = Matrix::Zero(static_cast<Eigen::Index>(rank_y),
                        static_cast<Eigen::Index>(rank_x * data.num_blocks()));
  s.core = update_g(s, data).block;
  return s;
}

namespace {

AlsResult run_from(const RegressionData& data, AlsState state, const AlsConfig& config) {
  FitReport report;
  double prev = loss(state, data);
  report.loss_trace.push_back(prev);
  for (std::size_t iter = 1; iter <= config.max_iters; ++iter) {
    for (std::size_t i = 0; i < state.response_factors.size(); ++i) {
      auto up = update_u_block(state, i, data);
      report.rank_deficient_solves += up.rank_deficient;
      state.response_factors[i] = std::move(up.block);
    }
    for (std::size_t j = 0; j < state.covariate_factors.size(); ++j) {
      auto up = update_v_block(state, j, data);
      report.rank_deficient_solves += up.rank_deficient;
      state.covariate_factors[j] = std::move(up.block);
    }
    for (auto& u : state.response_factors) u = col_norm(u);
    for (auto& v : state.covariate_factors) v = col_norm(v);
    auto g = update_g(state, data);
    report.rank_deficient_solves += g.rank_deficient;
    state.core = std::move(g.block);

    const double cur = loss(state, data);
    report.loss_trace.push_back(cur);
    report.iterations = iter;
    if (!std::isfinite(cur)) {
      throw Error(ErrorCode::estimator_failure, "loss became non-finite", "als_fit");
    }
    if (std::abs(prev - cur) / std::max(prev, 1e-12) < config.rel_tol) {
      report.converged = true;
      break;
    }
    prev = cur;
  }
  report.final_loss = report.loss_trace.back();
  return {coef_from_state(state, data), std::move(report), std::move(state)};
}

constexpr std::size_t kMaxDegenerateRedraws = 10;

}  // namespace

AlsResult als_fit_from(const RegressionData& data, AlsState init, const AlsConfig& config) {
  config.validate();
  check_state(init, data);
  return run_from(data, std::move(init), config);
}

AlsResult als_fit(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, const AlsConfig& config) {
  config.validate();
  if (data.samples() < 1) throw Error(ErrorCode::invalid_argument, "no samples to fit", "als_fit");
  std::vector<std::optional<AlsResult>> results(config.num_restarts);
  parallel_for(config.num_restarts, config.threads, [&](std::size_t restart) {
    std::size_t degenerate = 0;
    for (std::size_t attempt = 0;; ++attempt) {
      Rng rng = make_stream(config.rng_seed, {restart, attempt});
      try {
        AlsState init = random_init(data, rank_y, rank_x, rng);
        auto res = run_from(data, std::move(init), config);
        res.report.restart_index = restart;
        res.report.degenerate_restarts = degenerate;
        results[restart] = std::move(res);
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_factor || attempt + 1 >= kMaxDegenerateRedraws) throw;
        ++degenerate;
      }
    }
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    if (results[r]->report.final_loss < results[best]->report.final_loss) best = r;
  }
  return std::move(*results[best]);
}

AlsResult als_fit(const TensorSeries& series, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x,
                  const AlsConfig& config, ModelVariant variant) {
  return als_fit(make_ar_data(series, lag_order, variant), rank_y, rank_x, config);
}

}  // namespace cptar
