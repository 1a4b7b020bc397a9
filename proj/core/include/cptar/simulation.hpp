#pragma once

// Data-generating processes, stationarity checks, support recovery metrics
// and the Monte-Carlo rate experiments.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cptar/als.hpp"
#include "cptar/lrs.hpp"
#include "cptar/rng.hpp"
#include "cptar/selection.hpp"
#include "cptar/sparse_coef.hpp"

namespace cptar {

enum class NoiseKind {
  uniform,        ///< i.i.d. U(-0.5, 0.5)
  std_normal,     ///< i.i.d. N(0, 1)
  ar_correlated,  ///< N(0, Sigma) with Sigma_ij = 0.5^|i-j|
  none,           ///< noise free
};

std::string_view noise_name(NoiseKind k) noexcept;
NoiseKind parse_noise(std::string_view name);

struct DgpSpec {
  Shape dims;
  std::size_t lag_order = 1;
  std::size_t rank_y = 1;
  std::size_t rank_x = 1;
  NoiseKind noise = NoiseKind::std_normal;
  /// ||A||_F of the pure low-rank coefficient.
  double target_coef_norm = 0.9;
  /// Present for the low-rank plus sparse DGP.
  std::optional<std::size_t> sparse_support;
  /// Defaults to sqrt(P) * Q.
  std::optional<double> alpha_l;
  /// ||A_L + A_S||_F of the low-rank plus sparse coefficient.
  double target_joint_norm = 0.6;
  std::uint64_t rng_seed = 0;
  std::size_t burn_in = 200;
  std::size_t max_resamples = 100;

  bool has_sparse() const noexcept { return sparse_support.has_value(); }
  std::size_t total_dim() const { return shape_product(dims); }
  double resolved_alpha() const;
  void validate() const;
};

/// Loadings are standard normal with unit columns, G is standard normal and
/// rescaled so that ||A||_F = target_coef_norm, or, for the sparse DGP, so
/// that max |A_L| = alpha_L / (P Q^2).
LowRankCoef gen_lowrank_coef(const DgpSpec& spec, Rng& rng);

/// s distinct positions drawn uniformly, values standard normal (unscaled).
SparseCoef gen_sparse_coef(const DgpSpec& spec, Rng& rng);

struct LrsCoef {
  LowRankCoef lowrank;
  SparseCoef sparse;
};

/// Draws both parts and scales them jointly so ||A_L + A_S||_F equals
/// target_joint_norm.
LrsCoef gen_lrs_coef(const DgpSpec& spec, Rng& rng);

/// Noise source; the correlated kind caches its Cholesky factor.
class NoiseSampler {
 public:
  NoiseSampler(NoiseKind kind, std::size_t dim);

  NoiseKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  Vector draw(Rng& rng) const;

 private:
  NoiseKind kind_;
  std::size_t dim_;
  Matrix chol_;
};

std::vector<DenseTensor> gen_errors(const DgpSpec& spec, Rng& rng, std::size_t count);

struct StationarityCheck {
  bool stationary = false;
  double spectral_radius = 0.0;
};

inline constexpr double kStationarityMargin = 1e-8;

/// Spectral radius of the PQ x PQ companion matrix of a lag-major Q x PQ
/// coefficient. Dense eigensolver when PQ <= 512, windowed power iteration
/// otherwise.
StationarityCheck check_stationarity(const Matrix& coef, std::size_t lag_order);
/// Exact check for a shared-lag low-rank coefficient through the P R_y
/// companion of the feature recursion, which has the same nonzero spectrum.
StationarityCheck check_stationarity(const LowRankCoef& coef);

/// y_t = sum_k A_k y_{t-k} + e_t after `burn_in` discarded steps from a zero
/// state. Without noise the first P states are standard normal and nothing
/// is discarded.
TensorSeries simulate_series(const Matrix& coef, const Shape& dims, std::size_t lag_order, std::size_t length,
                             const NoiseSampler& noise, std::size_t burn_in, Rng& rng);
TensorSeries simulate_series(const DgpSpec& spec, const Matrix& coef, std::size_t length, Rng& rng);

struct SimulatedDgp {
  LowRankCoef lowrank;
  std::optional<SparseCoef> sparse;
  Matrix coef;  ///< lag-major A_L + A_S
  TensorSeries series;
  double spectral_radius = 0.0;
  std::size_t coef_draws = 1;
};

/// Draws coefficients until stationary (at most max_resamples), then a series.
SimulatedDgp simulate_dgp(const DgpSpec& spec, std::size_t length, Rng& rng);
SimulatedDgp simulate_dgp(const DgpSpec& spec, std::size_t length, const NoiseSampler& noise, Rng& rng);

struct SupportRates {
  double tpr = 0.0;
  double fpr = 0.0;
  /// Set when the true support is empty and tpr was defined as 1.
  bool tpr_by_convention = false;
};

SupportRates tpr_fpr(const SparseCoef& estimated, const SparseCoef& truth);

/// Sample Pearson correlation; empty when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

enum class ExperimentDesign { vary_t, vary_ranks, vary_dims, vary_alpha };

std::string_view design_name(ExperimentDesign d) noexcept;
ExperimentDesign parse_design(std::string_view name);

struct ExperimentCell {
  std::size_t length = 0;
  Shape dims;
  std::size_t rank_y = 1;
  std::size_t rank_x = 1;
  std::optional<double> alpha_l;
};

/// Cells for a design: `values` are sample sizes (vary_t), R_x values with
/// R_y = R_x + 1 (vary_ranks), a common q_i (vary_dims) or multipliers of
/// sqrt(P) Q (vary_alpha). Other settings come from `base` and `length`.
std::vector<ExperimentCell> design_cells(ExperimentDesign design, const DgpSpec& base, std::size_t length,
                                         std::span<const double> values);

struct ExperimentPlan {
  ExperimentDesign design = ExperimentDesign::vary_t;
  DgpSpec base;
  std::vector<ExperimentCell> cells;
  std::size_t replications = 50;
  EstimatorKind estimator = EstimatorKind::lowrank;
  AlsConfig als;
  /// lrs.lambda is used unless lambda_rate is set.
  LrsConfig lrs;
  /// lambda = lambda_rate * sqrt(log(P Q^2) / (T - P)).
  std::optional<double> lambda_rate;
  std::size_t threads = 1;
};

struct ReplicationRecord {
  std::size_t cell = 0;
  std::size_t replication = 0;
  double error = 0.0;          ///< ||A_hat - A||_F of the full coefficient
  double squared_error = 0.0;  ///< ||L_hat - L||^2 + ||S_hat - S||^2 (sparse DGP) else error^2
  std::optional<SupportRates> support;
  double lambda = 0.0;
  std::string failure;  ///< empty unless the fit failed
};

struct CellSummary {
  ExperimentCell cell;
  double abscissa = 0.0;
  double complexity = 0.0;  ///< d_AR
  double log_factor = 0.0;  ///< d_c
  double mean_error = 0.0;
  double mean_squared_error = 0.0;
  double mean_tpr = 0.0;
  double mean_fpr = 0.0;
  std::size_t successes = 0;
  std::size_t failures = 0;
};

struct RateDiagnostics {
  ExperimentDesign design = ExperimentDesign::vary_t;
  EstimatorKind estimator = EstimatorKind::lowrank;
  std::vector<CellSummary> cells;
  std::vector<ReplicationRecord> records;
  /// Correlation between the per-cell mean metric (error for the low-rank
  /// estimator, squared error for the sparse one) and the abscissa.
  std::optional<double> correlation;
  double slope = 0.0;
  double intercept = 0.0;
};

/// Theoretical abscissa of a cell: 1/sqrt(T-P) or sqrt(d_AR d_c) for the
/// low-rank estimator, (d_c d_AR + s log(P Q^2)) / (T-P) for the sparse one,
/// alpha_L for the alpha sweep.
double cell_abscissa(ExperimentDesign design, EstimatorKind estimator, const DgpSpec& base,
                     const ExperimentCell& cell);

RateDiagnostics run_rate_experiment(const ExperimentPlan& plan);

}  // namespace cptar
