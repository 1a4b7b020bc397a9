#pragma once

// Rolling one-step forecasts, forecast accuracy metrics and hold-out grid
// search over (P, R_y, R_x) and, for the sparse estimator, lambda.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cptar/als.hpp"
#include "cptar/lrs.hpp"

namespace cptar {

/// An estimate ready for prediction. The optional parts let the next rolling
/// refit start from this one.
struct FittedModel {
  Matrix coef;  ///< lag-major Q x PQ
  std::size_t lag_order = 1;
  std::optional<AlsState> lowrank_state;
  std::optional<SparseCoef> sparse;
};

/// Fits on `history`; `previous` is the fit from the preceding window, or null.
using FitFn = std::function<FittedModel(const TensorSeries& history, const FittedModel* previous)>;

FitFn make_lowrank_fit_fn(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, const AlsConfig& config);
FitFn make_lrs_fit_fn(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, const LrsConfig& config);

struct ForecastMetrics {
  double msfe = 0.0;  ///< mean over steps and entries of squared error
  double mafe = 0.0;  ///< mean over steps and entries of absolute error
};

ForecastMetrics forecast_metrics(const TensorSeries& predicted, const TensorSeries& actual);

struct ForecastReport {
  /// predictions[k] forecasts observation start + k (zero-based).
  TensorSeries predictions;
  double msfe = 0.0;
  double mafe = 0.0;
};

/// For t = start..T-1 fits on observations [0, t) and predicts observation t.
/// Requires lag_order < start < T.
ForecastReport rolling_forecast(const TensorSeries& series, const FitFn& fit, std::size_t start);

enum class EstimatorKind { lowrank, lrs };

struct HoldoutPlan {
  std::size_t train_len = 0;
  std::size_t val_len = 0;
  std::optional<std::size_t> test_len;
  std::size_t p_max = 12;
  std::size_t ry_max = 12;
  std::size_t rx_max = 12;
  /// Only used by the sparse estimator.
  std::vector<double> lambdas = {0.001, 0.003, 0.005, 0.008, 0.01, 0.03, 0.05, 0.08, 0.1, 0.3, 0.5, 0.8, 1.0};
  EstimatorKind estimator = EstimatorKind::lowrank;
  /// Sparse estimator only: pick (P, R_y, R_x) with the low-rank estimator
  /// first and search lambda at that configuration.
  bool reuse_lowrank_selection = true;
  AlsConfig als;
  LrsConfig lrs;
  std::size_t threads = 1;

  void validate(std::size_t series_length) const;
};

struct ScoreRow {
  std::size_t lag_order = 0;
  std::size_t rank_y = 0;
  std::size_t rank_x = 0;
  std::optional<double> lambda;
  double complexity = 0.0;  ///< d_AR
  double msfe = 0.0;
  double mafe = 0.0;
  /// Empty on success, else the failure message (msfe is then +inf).
  std::string error;
};

struct HoldoutResult {
  std::size_t lag_order = 0;
  std::size_t rank_y = 0;
  std::size_t rank_x = 0;
  std::optional<double> lambda;
  std::vector<ScoreRow> scores;
};

/// Exhaustive grid search minimizing validation MSFE; ties go to the smaller
/// d_AR, then lexicographically smaller (P, R_y, R_x, lambda).
HoldoutResult holdout_select(const TensorSeries& series, const HoldoutPlan& plan);

}  // namespace cptar
