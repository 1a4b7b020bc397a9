#include "cptar/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include "cptar/error.hpp"
#include "cptar/parallel.hpp"

namespace cptar {

FitFn make_lowrank_fit_fn(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, const AlsConfig& config) {
  config.validate();
  return [=](const TensorSeries& history, const FittedModel* previous) {
    const RegressionData data = make_ar_data(history, lag_order);
    std::optional<AlsResult> res;
    if (previous && previous->lowrank_state) {
      try {
        res = als_fit_from(data, *previous->lowrank_state, config);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_factor) throw;
      }
    }
    if (!res) res = als_fit(data, rank_y, rank_x, config);
    FittedModel out;
    out.coef = assemble_state(res->state, data);
    out.lag_order = lag_order;
    out.lowrank_state = std::move(res->state);
    return out;
  };
}

FitFn make_lrs_fit_fn(std::size_t lag_order, std::size_t rank_y, std::size_t rank_x, const LrsConfig& config) {
  config.validate();
  return [=](const TensorSeries& history, const FittedModel* previous) {
    const RegressionData data = make_ar_data(history, lag_order);
    std::optional<LrsResult> res;
    if (previous && previous->lowrank_state && previous->sparse) {
      const LrsWarmStart warm{*previous->lowrank_state, *previous->sparse};
      try {
        res = lrs_fit(data, rank_y, rank_x, config, &warm);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_factor) throw;
      }
    }
    if (!res) res = lrs_fit(data, rank_y, rank_x, config);
    FittedModel out;
    out.coef = assemble_state(res->state, data) + res->sparse.to_matrix();
    out.lag_order = lag_order;
    out.lowrank_state = std::move(res->state);
    out.sparse = std::move(res->sparse);
    return out;
  };
}

ForecastMetrics forecast_metrics(const TensorSeries& predicted, const TensorSeries& actual) {
  if (predicted.length() != actual.length()) {
    throw Error(ErrorCode::shape_mismatch, "prediction and actual series differ in length", "forecast_metrics");
  }
  if (predicted.length() > 0 && predicted.dims() != actual.dims()) {
    throw Error(ErrorCode::shape_mismatch, "prediction and actual series differ in shape", "forecast_metrics");
  }
  ForecastMetrics m;
  if (actual.length() == 0) return m;
  double sq = 0.0;
  double ab = 0.0;
  for (std::size_t t = 0; t < actual.length(); ++t) {
    const Vector d = predicted[t].data() - actual[t].data();
    sq += d.squaredNorm();
    ab += d.cwiseAbs().sum();
  }
  const double count = static_cast<double>(actual.length() * actual.total_dim());
  m.msfe = sq / count;
  m.mafe = ab / count;
  return m;
}

ForecastReport rolling_forecast(const TensorSeries& series, const FitFn& fit, std::size_t start) {
  const std::size_t t_len = series.length();
  if (start >= t_len) {
    throw Error(ErrorCode::invalid_argument,
                "forecast start " + std::to_string(start) + " leaves no observation to predict", "rolling_forecast");
  }
  std::vector<DenseTensor> preds;
  preds.reserve(t_len - start);
  std::optional<FittedModel> model;
  for (std::size_t t = start; t < t_len; ++t) {
    const std::string where = "rolling_forecast step " + std::to_string(t - start);
    try {
      FittedModel next = fit(series.prefix(t), model ? &*model : nullptr);
      model = std::move(next);
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), where);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::estimator_failure, e.what(), where);
    }
    const std::size_t p = model->lag_order;
    if (p >= t) {
      throw Error(ErrorCode::invalid_argument, "forecast start must exceed the lag order", where);
    }
    std::vector<DenseTensor> lagged;
    lagged.reserve(p);
    for (std::size_t k = 1; k <= p; ++k) lagged.push_back(series[t - k]);
    preds.push_back(predict_dense(model->coef, series.dims(), lagged));
  }
  ForecastReport report;
  report.predictions = TensorSeries(std::move(preds));
  const auto m = forecast_metrics(report.predictions, series.slice(start, t_len));
  report.msfe = m.msfe;
  report.mafe = m.mafe;
  return report;
}

void HoldoutPlan::validate(std::size_t series_length) const {
  if (train_len < 2 || val_len < 1) throw Error(ErrorCode::config_error, "train_len >= 2 and val_len >= 1 required");
  if (train_len + val_len > series_length) {
    throw Error(ErrorCode::config_error, "train_len + val_len exceeds the series length");
  }
  if (test_len && train_len + val_len + *test_len > series_length) {
    throw Error(ErrorCode::config_error, "train_len + val_len + test_len exceeds the series length");
  }
  if (p_max < 1 || ry_max < 1 || rx_max < 1) throw Error(ErrorCode::config_error, "grid bounds must be >= 1");
  if (p_max >= train_len) throw Error(ErrorCode::config_error, "p_max must be below train_len");
  if (estimator == EstimatorKind::lrs) {
    if (lambdas.empty()) throw Error(ErrorCode::config_error, "lambda grid is empty");
    for (double l : lambdas) {
      if (!(l > 0.0)) throw Error(ErrorCode::config_error, "lambda grid values must be > 0");
    }
  }
  als.validate();
}

namespace {

struct Cell {
  std::size_t p, ry, rx;
  std::optional<double> lambda;
};

bool better(const ScoreRow& a, const ScoreRow& b) {
  if (a.msfe != b.msfe) return a.msfe < b.msfe;
  if (a.complexity != b.complexity) return a.complexity < b.complexity;
  const double la = a.lambda.value_or(0.0);
  const double lb = b.lambda.value_or(0.0);
  return std::tie(a.lag_order, a.rank_y, a.rank_x, la) < std::tie(b.lag_order, b.rank_y, b.rank_x, lb);
}

std::vector<ScoreRow> evaluate(const TensorSeries& window, std::size_t start, const std::vector<Cell>& cells,
                               const HoldoutPlan& plan) {
  std::vector<ScoreRow> rows(cells.size());
  const Shape& dims = window.dims();
  parallel_for(cells.size(), plan.threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    ScoreRow& row = rows[i];
    row.lag_order = c.p;
    row.rank_y = c.ry;
    row.rank_x = c.rx;
    row.lambda = c.lambda;
    row.complexity = complexity_ar(c.p, c.ry, c.rx, dims);
    try {
      FitFn fit;
      if (c.lambda) {
        LrsConfig cfg = plan.lrs;
        cfg.lambda = *c.lambda;
        fit = make_lrs_fit_fn(c.p, c.ry, c.rx, cfg);
      } else {
        fit = make_lowrank_fit_fn(c.p, c.ry, c.rx, plan.als);
      }
      const auto report = rolling_forecast(window, fit, start);
      row.msfe = report.msfe;
      row.mafe = report.mafe;
      if (!std::isfinite(row.msfe)) row.error = "non-finite forecast error";
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (!row.error.empty()) {
      row.msfe = std::numeric_limits<double>::infinity();
      row.mafe = std::numeric_limits<double>::infinity();
    }
  });
  return rows;
}

const ScoreRow& best_of(const std::vector<ScoreRow>& rows) {
  return *std::min_element(rows.begin(), rows.end(), better);
}

}  // namespace

HoldoutResult holdout_select(const TensorSeries& series, const HoldoutPlan& plan) {
  plan.validate(series.length());
  const TensorSeries window = series.prefix(plan.train_len + plan.val_len);

  std::vector<Cell> structural;
  for (std::size_t p = 1; p <= plan.p_max; ++p) {
    for (std::size_t ry = 1; ry <= plan.ry_max; ++ry) {
      for (std::size_t rx = 1; rx <= plan.rx_max; ++rx) structural.push_back({p, ry, rx, std::nullopt});
    }
  }

  HoldoutResult result;
  std::vector<Cell> cells;
  if (plan.estimator == EstimatorKind::lowrank) {
    cells = structural;
  } else if (plan.reuse_lowrank_selection) {
    result.scores = evaluate(window, plan.train_len, structural, plan);
    const ScoreRow& chosen = best_of(result.scores);
    for (double l : plan.lambdas) cells.push_back({chosen.lag_order, chosen.rank_y, chosen.rank_x, l});
  } else {
    for (const auto& s : structural) {
      for (double l : plan.lambdas) cells.push_back({s.p, s.ry, s.rx, l});
    }
  }

  auto rows = evaluate(window, plan.train_len, cells, plan);
  const ScoreRow best = best_of(rows);
  result.scores.insert(result.scores.end(), rows.begin(), rows.end());
  result.lag_order = best.lag_order;
  result.rank_y = best.rank_y;
  result.rank_x = best.rank_x;
  result.lambda = best.lambda;
  return result;
}

}  // namespace cptar
