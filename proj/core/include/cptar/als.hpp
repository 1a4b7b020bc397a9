#pragma once

// Alternating least squares over the blocks U_1..U_n, V_1..V_m and G of the
// CP-based low-rank coefficient. Every block update is a closed-form
// least-squares solve; normal equations are accumulated from Gram products
// so the (T-P)Q-row design matrices are never formed.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cptar/factor_model.hpp"
#include "cptar/rng.hpp"

namespace cptar {

struct AlsConfig {
  std::size_t max_iters = 200;
  /// Stop when |L_k - L_{k+1}| / max(L_k, 1e-12) < rel_tol.
  double rel_tol = 1e-6;
  std::size_t num_restarts = 5;
  std::uint64_t rng_seed = 0;
  /// Workers used for independent restarts.
  std::size_t threads = 1;

  void validate() const;
};

struct FitReport {
  double final_loss = 0.0;
  /// Loss after each G update, starting with the initial G^(0).
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t restart_index = 0;
  /// Block regressions that fell back to the minimum-norm solution.
  std::size_t rank_deficient_solves = 0;
  /// Initializations redrawn after a zero column appeared during ColNorm.
  std::size_t degenerate_restarts = 0;
};

/// Responses and covariate blocks of the regression every estimator solves:
/// vec(Y_t) = Lambda_y G (I_L (x) Lambda_x^T) [z_{t,1}; ...; z_{t,L}] + e_t.
struct RegressionData {
  Matrix responses;                ///< Q x N, one column per sample
  std::vector<Matrix> covariates;  ///< L blocks, each p x N
  Shape response_dims;
  Shape covariate_dims;  ///< dims of one covariate block
  ModelVariant variant = ModelVariant::ar_shared_lags;
  std::size_t lag_order = 1;

  std::size_t samples() const noexcept { return static_cast<std::size_t>(responses.cols()); }
  std::size_t num_blocks() const noexcept { return covariates.size(); }
};

/// Samples t = P+1..T of an AR(P) series. Block k holds vec(Y_{t-k-1}); the
/// stacked variant instead holds one block of shape (P, q_1..q_n).
RegressionData make_ar_data(const TensorSeries& series, std::size_t lag_order,
                            ModelVariant variant = ModelVariant::ar_shared_lags);
/// Paired (Y_t, X_t) samples for the regression variant.
RegressionData make_regression_data(const TensorSeries& responses, const TensorSeries& covariates);

/// PQ x N lag-major stacked covariates vec(X_t) (AR variants), or the single
/// covariate block for regression.
Matrix stacked_covariates(const RegressionData& data);

/// Raw ALS blocks. Columns are not necessarily unit norm mid-cycle.
struct AlsState {
  std::vector<Matrix> response_factors;
  std::vector<Matrix> covariate_factors;
  Matrix core;
};

AlsState state_from_coef(const LowRankCoef& coef);
/// Wraps a state whose factor columns are unit norm.
LowRankCoef coef_from_state(const AlsState& state, const RegressionData& data);
/// Lag-major coefficient (or Lambda_y G Lambda_x^T for regression).
Matrix assemble_state(const AlsState& state, const RegressionData& data);

/// (1/N) sum_t ||vec(Y_t) - [A]_n vec(X_t)||^2 with the dense lag-major
/// coefficient. Requires T > P.
double loss(const Matrix& coef, const TensorSeries& series, std::size_t lag_order);
double loss(const Matrix& coef, const RegressionData& data);
/// Same objective evaluated through the factor structure.
double loss(const AlsState& state, const RegressionData& data);

struct BlockUpdate {
  Matrix block;
  bool rank_deficient = false;
};

/// New U_mode (un-normalized) holding every other block fixed.
BlockUpdate update_u_block(const AlsState& state, std::size_t mode, const RegressionData& data);
/// New V_mode (un-normalized) holding every other block fixed.
BlockUpdate update_v_block(const AlsState& state, std::size_t mode, const RegressionData& data);
/// New G holding all loadings fixed.
BlockUpdate update_g(const AlsState& state, const RegressionData& data);

/// Standard-normal loadings with unit columns, then G^(0) by least squares.
AlsState random_init(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, Rng& rng);

struct AlsResult {
  LowRankCoef coef;
  FitReport report;
  AlsState state;
};

/// Multi-restart ALS; the winner has the smallest final loss (ties go to the
/// lower restart index).
AlsResult als_fit(const RegressionData& data, std::size_t rank_y, std::size_t rank_x, const AlsConfig& config);
AlsResult als_fit(const TensorSeries& series, std::size_t lag_order, std::size_t rank_y, std::size_t rank_x,
                  const AlsConfig& config, ModelVariant variant = ModelVariant::ar_shared_lags);
/// Single ALS run from a given state (warm start). num_restarts is ignored.
AlsResult als_fit_from(const RegressionData& data, AlsState init, const AlsConfig& config);

}  // namespace cptar
