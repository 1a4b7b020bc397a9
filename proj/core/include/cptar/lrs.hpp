#pragma once

// Low-rank plus sparse estimation: alternate trimming of the low-rank part,
// a Lasso step for the sparse part, and ALS for the low-rank part.

#include <cstddef>
#include <optional>
#include <vector>

#include "cptar/als.hpp"
#include "cptar/sparse_coef.hpp"

namespace cptar {

/// Clip each entry to [-zeta, zeta].
DenseTensor trim(const DenseTensor& t, double zeta);
Matrix trim(const Matrix& m, double zeta);

/// Sufficient statistics of the sparse regression: Sigma = X X^T / N and
/// C = Y X^T / N over lag-major stacked covariates.
struct LassoProblem {
  Matrix gram;   ///< PQ x PQ
  Matrix cross;  ///< Q x PQ
  Shape dims;
  std::size_t lag_order = 1;
  std::size_t samples = 0;
};

LassoProblem make_lasso_problem(const RegressionData& data);

struct LassoOptions {
  /// Stop once a full sweep changes no coordinate by more than this.
  double tol = 1e-10;
  std::size_t max_sweeps = 100000;
};

/// Smallest lambda for which the sparse part is identically zero:
/// max_ij 2 |[(Y - fixed X) X^T / N]_ij|.
double lambda_max(const LassoProblem& problem, const Matrix& fixed_lowrank);

/// argmin_S L_T(fixed + S) + lambda * sum |S_ij| by cyclic coordinate descent
/// over [S]_n in row-major order.
SparseCoef lasso_step(const LassoProblem& problem, const Matrix& fixed_lowrank, double lambda,
                      const LassoOptions& options = {}, const SparseCoef* warm_start = nullptr,
                      std::size_t* sweeps_used = nullptr);
SparseCoef lasso_step(const TensorSeries& series, std::size_t lag_order, const Matrix& fixed_lowrank, double lambda,
                      const LassoOptions& options = {});

struct LrsConfig {
  double lambda = 0.01;
  /// Radius of non-identifiability; defaults to sqrt(P) * Q.
  std::optional<double> alpha_l;
  std::size_t outer_iters = 50;
  double outer_tol = 1e-5;
  LassoOptions lasso;
  AlsConfig als;

  double resolved_alpha(std::size_t lag_order, std::size_t q) const;
  /// Trimming level alpha_L / (P Q^2).
  double zeta(std::size_t lag_order, std::size_t q) const;
  void validate() const;
};

struct PenalizedObjective {
  double loss = 0.0;
  double penalty = 0.0;
  double value = 0.0;
  double lowrank_max_abs = 0.0;
  bool lowrank_constraint_ok = true;
};

/// L_T(A_L + A_S) + lambda * ||A_S||_1 (sum of absolute values), plus whether
/// ||A_L||_inf <= zeta.
PenalizedObjective penalized_objective(const Matrix& lowrank, const SparseCoef& sparse, const RegressionData& data,
                                       double lambda, double zeta);
PenalizedObjective penalized_objective(const Matrix& lowrank, const SparseCoef& sparse, const TensorSeries& series,
                                       std::size_t lag_order, double lambda, double zeta);

struct LrsResult {
  LowRankCoef lowrank;
  SparseCoef sparse;
  /// Report of the final ALS sub-solve.
  FitReport als_report;
  /// Penalized objective after each outer iteration.
  std::vector<double> objective_trace;
  std::size_t outer_iterations = 0;
  bool converged = false;
  /// Whether the reported (untrimmed) low-rank part satisfies ||A_L||_inf <= zeta.
  bool constraint_satisfied = false;
  double zeta = 0.0;
  AlsState state;
};

/// Warm start for lrs_fit; skips the cold multi-restart initialization.
struct LrsWarmStart {
  AlsState lowrank;
  SparseCoef sparse;
};

LrsResult lrs_fit(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, const LrsConfig& config,
                  const LrsWarmStart* warm = nullptr);
LrsResult lrs_fit(const TensorSeries& series, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x,
                  const LrsConfig& config);

}  // namespace cptar
