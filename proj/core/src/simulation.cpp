#include "cptar/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>

#include "cptar/error.hpp"
#include "cptar/parallel.hpp"

namespace cptar {

std::string_view noise_name(NoiseKind k) noexcept {
  switch (k) {
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::std_normal: return "std_normal";
    case NoiseKind::ar_correlated: return "ar_correlated";
    case NoiseKind::none: return "none";
  }
  return "unknown";
}

NoiseKind parse_noise(std::string_view name) {
  if (name == "uniform" || name == "i") return NoiseKind::uniform;
  if (name == "std_normal" || name == "normal" || name == "ii") return NoiseKind::std_normal;
  if (name == "ar_correlated" || name == "correlated" || name == "iii") return NoiseKind::ar_correlated;
  if (name == "none") return NoiseKind::none;
  throw Error(ErrorCode::config_error, "unknown noise kind '" + std::string(name) + "'", "parse_noise");
}

double DgpSpec::resolved_alpha() const {
  if (alpha_l) return *alpha_l;
  return std::sqrt(static_cast<double>(lag_order)) * static_cast<double>(total_dim());
}

void DgpSpec::validate() const {
  if (dims.empty()) throw Error(ErrorCode::config_error, "DGP needs at least one mode");
  for (auto d : dims) {
    if (d == 0) throw Error(ErrorCode::config_error, "DGP dims must be positive");
  }
  if (lag_order < 1 || rank_y < 1 || rank_x < 1) {
    throw Error(ErrorCode::config_error, "lag order and ranks must be >= 1");
  }
  if (!(target_coef_norm > 0.0) || !(target_joint_norm > 0.0)) {
    throw Error(ErrorCode::config_error, "target norms must be > 0");
  }
  const std::size_t q = total_dim();
  if (sparse_support && *sparse_support > lag_order * q * q) {
    throw Error(ErrorCode::config_error, "sparse support exceeds P Q^2");
  }
  if (alpha_l && !(*alpha_l > 0.0)) throw Error(ErrorCode::config_error, "alpha_L must be > 0");
  if (max_resamples < 1) throw Error(ErrorCode::config_error, "max_resamples must be >= 1");
}

namespace {

Matrix std_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd;
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = nd(rng);
  }
  return m;
}

std::vector<Matrix> random_loadings(const Shape& dims, std::size_t rank, Rng& rng) {
  std::vector<Matrix> out;
  out.reserve(dims.size());
  for (auto d : dims) {
    for (;;) {
      Matrix m = std_normal_matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rank), rng);
      try {
        out.push_back(col_norm(m));
        break;
      } catch (const Error&) {
      }
    }
  }
  return out;
}

}  // namespace

LowRankCoef gen_lowrank_coef(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  auto u = random_loadings(spec.dims, spec.rank_y, rng);
  auto v = random_loadings(spec.dims, spec.rank_x, rng);
  Matrix g = std_normal_matrix(static_cast<Eigen::Index>(spec.rank_y),
                               static_cast<Eigen::Index>(spec.lag_order * spec.rank_x), rng);
  LowRankCoef coef(CPLoadingSet(std::move(u)), CPLoadingSet(std::move(v)), std::move(g), spec.lag_order);
  const Matrix a = assemble_coef(coef);
  double scale = 0.0;
  if (spec.has_sparse()) {
    const double q = static_cast<double>(spec.total_dim());
    const double bound = spec.resolved_alpha() / (static_cast<double>(spec.lag_order) * q * q);
    scale = bound / a.cwiseAbs().maxCoeff();
  } else {
    scale = spec.target_coef_norm / a.norm();
  }
  coef.mutable_core() *= scale;
  return coef;
}

SparseCoef gen_sparse_coef(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  SparseCoef out(spec.dims, spec.lag_order);
  const std::size_t s = spec.sparse_support.value_or(0);
  const std::size_t q = spec.total_dim();
  const std::size_t positions = spec.lag_order * q * q;
  // Floyd's sampling of s distinct linear positions in the Q x PQ matrix.
  std::set<std::size_t> chosen;
  for (std::size_t j = positions - s; j < positions; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    chosen.insert(chosen.contains(t) ? j : t);
  }
  std::normal_distribution<double> nd;
  for (auto lin : chosen) {
    const std::size_t row = lin % q;
    const std::size_t col = lin / q;
    double v = 0.0;
    while (v == 0.0) v = nd(rng);
    out.set({row, col / q, col % q}, v);
  }
  return out;
}

LrsCoef gen_lrs_coef(const DgpSpec& spec, Rng& rng) {
  if (!spec.has_sparse()) {
    throw Error(ErrorCode::invalid_argument, "spec has no sparse support size", "gen_lrs_coef");
  }
  LrsCoef out{gen_lowrank_coef(spec, rng), gen_sparse_coef(spec, rng)};
  const double norm = (assemble_coef(out.lowrank) + out.sparse.to_matrix()).norm();
  const double c = spec.target_joint_norm / norm;
  out.lowrank.mutable_core() *= c;
  out.sparse.scale(c);
  return out;
}

NoiseSampler::NoiseSampler(NoiseKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
  if (kind_ == NoiseKind::ar_correlated) {
    const auto q = static_cast<Eigen::Index>(dim_);
    Matrix sigma(q, q);
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = 0; j < q; ++j) sigma(i, j) = std::pow(0.5, static_cast<double>(std::abs(i - j)));
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::singular_matrix, "error covariance is not positive definite", "NoiseSampler");
    }
    chol_ = llt.matrixL();
  }
}

Vector NoiseSampler::draw(Rng& rng) const {
  const auto q = static_cast<Eigen::Index>(dim_);
  Vector e(q);
  switch (kind_) {
    case NoiseKind::uniform: {
      std::uniform_real_distribution<double> ud(-0.5, 0.5);
      for (Eigen::Index i = 0; i < q; ++i) {
        double v = -0.5;
        while (v == -0.5) v = ud(rng);
        e[i] = v;
      }
      break;
    }
    case NoiseKind::std_normal: {
      std::normal_distribution<double> nd;
      for (Eigen::Index i = 0; i < q; ++i) e[i] = nd(rng);
      break;
    }
    case NoiseKind::ar_correlated: {
      std::normal_distribution<double> nd;
      Vector z(q);
      for (Eigen::Index i = 0; i < q; ++i) z[i] = nd(rng);
      e.noalias() = chol_.triangularView<Eigen::Lower>() * z;
      break;
    }
    case NoiseKind::none:
      e.setZero();
      break;
  }
  return e;
}

std::vector<DenseTensor> gen_errors(const DgpSpec& spec, Rng& rng, std::size_t count) {
  const NoiseSampler sampler(spec.noise, spec.total_dim());
  std::vector<DenseTensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(spec.dims, sampler.draw(rng));
  return out;
}

namespace {

double dense_spectral_radius(const Matrix& companion) {
  if (companion.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(companion, false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::estimator_failure, "eigenvalue computation did not converge", "check_stationarity");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix companion_matrix(const Matrix& coef, std::size_t lag_order) {
  const Eigen::Index q = coef.rows();
  const Eigen::Index pq = coef.cols();
  Matrix b = Matrix::Zero(pq, pq);
  b.topRows(q) = coef;
  if (lag_order > 1) b.bottomLeftCorner(pq - q, pq - q).setIdentity();
  return b;
}

// Growth rate of ||B^k x|| averaged over a window, which also converges when
// the dominant eigenvalues form a complex pair.
double power_spectral_radius(const Matrix& coef, std::size_t lag_order) {
  const Eigen::Index q = coef.rows();
  const Eigen::Index pq = coef.cols();
  constexpr std::size_t window = 64;
  constexpr std::size_t max_windows = 400;
  Rng rng = make_stream(0x5eed, {static_cast<std::uint64_t>(pq)});
  Vector x = std_normal_matrix(pq, 1, rng).col(0);
  x.normalize();
  Vector y(pq);
  double prev = -1.0;
  double estimate = 0.0;
  for (std::size_t w = 0; w < max_windows; ++w) {
    double log_growth = 0.0;
    for (std::size_t k = 0; k < window; ++k) {
      y.head(q).noalias() = coef * x;
      if (lag_order > 1) y.tail(pq - q) = x.head(pq - q);
      const double g = y.norm();
      if (g == 0.0) return 0.0;
      log_growth += std::log(g);
      x = y / g;
    }
    estimate = std::exp(log_growth / static_cast<double>(window));
    if (prev >= 0.0 && std::abs(estimate - prev) < 1e-10) break;
    prev = estimate;
  }
  return estimate;
}

StationarityCheck make_check(double rho) { return {rho < 1.0 - kStationarityMargin, rho}; }

}  // namespace

StationarityCheck check_stationarity(const Matrix& coef, std::size_t lag_order) {
  if (lag_order < 1 || coef.cols() != coef.rows() * static_cast<Eigen::Index>(lag_order)) {
    throw Error(ErrorCode::shape_mismatch, "coefficient must be Q x PQ", "check_stationarity");
  }
  if (coef.cols() <= 512) return make_check(dense_spectral_radius(companion_matrix(coef, lag_order)));
  return make_check(power_spectral_radius(coef, lag_order));
}

StationarityCheck check_stationarity(const LowRankCoef& coef) {
  if (coef.variant() == ModelVariant::regression) {
    throw Error(ErrorCode::invalid_argument, "regression coefficients have no companion form", "check_stationarity");
  }
  if (coef.variant() != ModelVariant::ar_shared_lags) return check_stationarity(assemble_coef(coef), coef.lag_order());
  const Matrix ly = assemble_lambda(coef.response_loadings());
  const Matrix lx = assemble_lambda(coef.covariate_loadings());
  const Matrix cross = lx.transpose() * ly;  // R_x x R_y
  const auto ry = static_cast<Eigen::Index>(coef.rank_y());
  const auto rx = static_cast<Eigen::Index>(coef.rank_x());
  const auto p = static_cast<Eigen::Index>(coef.lag_order());
  Matrix small(ry, p * ry);
  for (Eigen::Index k = 0; k < p; ++k) small.middleCols(k * ry, ry) = coef.core().middleCols(k * rx, rx) * cross;
  return make_check(dense_spectral_radius(companion_matrix(small, coef.lag_order())));
}

TensorSeries simulate_series(const Matrix& coef, const Shape& dims, std::size_t lag_order, std::size_t length,
                             const NoiseSampler& noise, std::size_t burn_in, Rng& rng) {
  const auto q = static_cast<Eigen::Index>(shape_product(dims));
  const auto p = static_cast<Eigen::Index>(lag_order);
  if (coef.rows() != q || coef.cols() != p * q) {
    throw Error(ErrorCode::shape_mismatch, "coefficient must be Q x PQ", "simulate_series");
  }
  if (static_cast<Eigen::Index>(noise.dim()) != q) {
    throw Error(ErrorCode::shape_mismatch, "noise dimension differs from Q", "simulate_series");
  }
  if (length == 0) throw Error(ErrorCode::invalid_argument, "series length must be positive", "simulate_series");

  const bool noiseless = noise.kind() == NoiseKind::none;
  const Eigen::Index drop = noiseless ? 0 : p + static_cast<Eigen::Index>(burn_in);
  const Eigen::Index total = drop + static_cast<Eigen::Index>(length);
  Matrix y = Matrix::Zero(q, std::max(total, p));
  if (noiseless) y.leftCols(p) = std_normal_matrix(q, p, rng);
  for (Eigen::Index t = p; t < total; ++t) {
    Vector next = noise.draw(rng);
    for (Eigen::Index k = 0; k < p; ++k) next.noalias() += coef.middleCols(k * q, q) * y.col(t - 1 - k);
    y.col(t) = next;
  }
  return TensorSeries::from_columns(dims, y.middleCols(drop, static_cast<Eigen::Index>(length)));
}

TensorSeries simulate_series(const DgpSpec& spec, const Matrix& coef, std::size_t length, Rng& rng) {
  const NoiseSampler noise(spec.noise, spec.total_dim());
  return simulate_series(coef, spec.dims, spec.lag_order, length, noise, spec.burn_in, rng);
}

SimulatedDgp simulate_dgp(const DgpSpec& spec, std::size_t length, const NoiseSampler& noise, Rng& rng) {
  spec.validate();
  for (std::size_t attempt = 1; attempt <= spec.max_resamples; ++attempt) {
    SimulatedDgp out;
    StationarityCheck check;
    if (spec.has_sparse()) {
      LrsCoef c = gen_lrs_coef(spec, rng);
      out.coef = assemble_coef(c.lowrank) + c.sparse.to_matrix();
      out.lowrank = std::move(c.lowrank);
      out.sparse = std::move(c.sparse);
      check = check_stationarity(out.coef, spec.lag_order);
    } else {
      out.lowrank = gen_lowrank_coef(spec, rng);
      out.coef = assemble_coef(out.lowrank);
      check = check_stationarity(out.lowrank);
    }
    if (!check.stationary) continue;
    out.spectral_radius = check.spectral_radius;
    out.coef_draws = attempt;
    out.series = simulate_series(out.coef, spec.dims, spec.lag_order, length, noise, spec.burn_in, rng);
    return out;
  }
  throw Error(ErrorCode::non_stationary,
              "no stationary coefficient after " + std::to_string(spec.max_resamples) + " draws", "simulate_dgp");
}

SimulatedDgp simulate_dgp(const DgpSpec& spec, std::size_t length, Rng& rng) {
  const NoiseSampler noise(spec.noise, spec.total_dim());
  return simulate_dgp(spec, length, noise, rng);
}

SupportRates tpr_fpr(const SparseCoef& estimated, const SparseCoef& truth) {
  if (estimated.dims() != truth.dims() || estimated.lag_order() != truth.lag_order()) {
    throw Error(ErrorCode::shape_mismatch, "sparse coefficients differ in shape", "tpr_fpr");
  }
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& [idx, _] : estimated.entries()) {
    if (truth.entries().contains(idx)) {
      ++tp;
    } else {
      ++fp;
    }
  }
  SupportRates r;
  const std::size_t positives = truth.support_size();
  const std::size_t zeros = truth.num_positions() - positives;
  if (positives == 0) {
    r.tpr = 1.0;
    r.tpr_by_convention = true;
  } else {
    r.tpr = static_cast<double>(tp) / static_cast<double>(positives);
  }
  r.fpr = zeros == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(zeros);
  return r;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::shape_mismatch, "pearson inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::string_view design_name(ExperimentDesign d) noexcept {
  switch (d) {
    case ExperimentDesign::vary_t: return "vary-t";
    case ExperimentDesign::vary_ranks: return "vary-ranks";
    case ExperimentDesign::vary_dims: return "vary-dims";
    case ExperimentDesign::vary_alpha: return "vary-alpha";
  }
  return "unknown";
}

ExperimentDesign parse_design(std::string_view name) {
  if (name == "vary-t" || name == "vary_t") return ExperimentDesign::vary_t;
  if (name == "vary-ranks" || name == "vary_ranks") return ExperimentDesign::vary_ranks;
  if (name == "vary-dims" || name == "vary_dims") return ExperimentDesign::vary_dims;
  if (name == "vary-alpha" || name == "vary_alpha") return ExperimentDesign::vary_alpha;
  throw Error(ErrorCode::config_error, "unknown design '" + std::string(name) + "'", "parse_design");
}

std::vector<ExperimentCell> design_cells(ExperimentDesign design, const DgpSpec& base, std::size_t length,
                                         std::span<const double> values) {
  std::vector<ExperimentCell> cells;
  for (double v : values) {
    if (!(v > 0.0)) throw Error(ErrorCode::config_error, "design values must be positive", "design_cells");
    ExperimentCell c{length, base.dims, base.rank_y, base.rank_x, base.alpha_l};
    const auto whole = static_cast<std::size_t>(std::llround(v));
    switch (design) {
      case ExperimentDesign::vary_t:
        c.length = whole;
        break;
      case ExperimentDesign::vary_ranks:
        c.rank_x = whole;
        c.rank_y = whole + 1;
        break;
      case ExperimentDesign::vary_dims:
        c.dims.assign(base.dims.size(), whole);
        break;
      case ExperimentDesign::vary_alpha:
        c.alpha_l = v * std::sqrt(static_cast<double>(base.lag_order)) * static_cast<double>(base.total_dim());
        break;
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

namespace {

DgpSpec cell_spec(const DgpSpec& base, const ExperimentCell& cell) {
  DgpSpec s = base;
  s.dims = cell.dims;
  s.rank_y = cell.rank_y;
  s.rank_x = cell.rank_x;
  s.alpha_l = cell.alpha_l;
  return s;
}

double log_positions(std::size_t lag_order, std::size_t q) {
  return std::log(static_cast<double>(lag_order) * static_cast<double>(q) * static_cast<double>(q));
}

}  // namespace

double cell_abscissa(ExperimentDesign design, EstimatorKind estimator, const DgpSpec& base,
                     const ExperimentCell& cell) {
  const DgpSpec s = cell_spec(base, cell);
  if (design == ExperimentDesign::vary_alpha) return s.resolved_alpha();
  const std::size_t p = s.lag_order;
  if (cell.length <= p) throw Error(ErrorCode::config_error, "sample size must exceed the lag order");
  const double d_ar = complexity_ar(p, s.rank_y, s.rank_x, s.dims);
  const double d_c = complexity_log_factor(s.dims.size(), p, s.rank_y, s.rank_x);
  const double eff = static_cast<double>(cell.length - p);
  if (estimator == EstimatorKind::lrs) {
    const double sparse = static_cast<double>(s.sparse_support.value_or(0));
    return (d_c * d_ar + sparse * log_positions(p, s.total_dim())) / eff;
  }
  if (design == ExperimentDesign::vary_t) return 1.0 / std::sqrt(eff);
  return std::sqrt(d_ar * d_c);
}

RateDiagnostics run_rate_experiment(const ExperimentPlan& plan) {
  plan.base.validate();
  if (plan.cells.empty()) throw Error(ErrorCode::config_error, "experiment has no cells", "run_rate_experiment");
  if (plan.replications < 1) throw Error(ErrorCode::config_error, "replications must be >= 1");
  if (plan.estimator == EstimatorKind::lrs && !plan.base.has_sparse()) {
    throw Error(ErrorCode::config_error, "sparse estimator needs a sparse DGP", "run_rate_experiment");
  }
  plan.als.validate();

  RateDiagnostics diag;
  diag.design = plan.design;
  diag.estimator = plan.estimator;

  std::vector<NoiseSampler> samplers;
  std::vector<DgpSpec> specs;
  for (const auto& cell : plan.cells) {
    specs.push_back(cell_spec(plan.base, cell));
    specs.back().validate();
    samplers.emplace_back(plan.base.noise, specs.back().total_dim());
  }

  const std::size_t reps = plan.replications;
  diag.records.resize(plan.cells.size() * reps);
  parallel_for(diag.records.size(), plan.threads, [&](std::size_t k) {
    const std::size_t ci = k / reps;
    const std::size_t r = k % reps;
    const DgpSpec& spec = specs[ci];
    const ExperimentCell& cell = plan.cells[ci];
    ReplicationRecord& rec = diag.records[k];
    rec.cell = ci;
    rec.replication = r;
    try {
      // Stream id = replication index, shared by every cell.
      Rng rng = make_stream(plan.base.rng_seed, {r});
      const SimulatedDgp dgp = simulate_dgp(spec, cell.length, samplers[ci], rng);
      if (plan.estimator == EstimatorKind::lowrank) {
        AlsConfig cfg = plan.als;
        cfg.rng_seed = plan.als.rng_seed + r;
        cfg.threads = 1;
        const auto fit = als_fit(dgp.series, spec.lag_order, spec.rank_y, spec.rank_x, cfg);
        rec.error = (assemble_coef(fit.coef) - dgp.coef).norm();
        rec.squared_error = rec.error * rec.error;
      } else {
        LrsConfig cfg = plan.lrs;
        cfg.als.rng_seed = plan.lrs.als.rng_seed + r;
        cfg.als.threads = 1;
        cfg.alpha_l = spec.resolved_alpha();
        if (plan.lambda_rate) {
          const double eff = static_cast<double>(cell.length - spec.lag_order);
          cfg.lambda = *plan.lambda_rate * std::sqrt(log_positions(spec.lag_order, spec.total_dim()) / eff);
        }
        rec.lambda = cfg.lambda;
        const auto fit = lrs_fit(dgp.series, spec.lag_order, spec.rank_y, spec.rank_x, cfg);
        const Matrix l_hat = assemble_coef(fit.lowrank);
        const Matrix s_hat = fit.sparse.to_matrix();
        const Matrix l_true = assemble_coef(dgp.lowrank);
        const Matrix s_true = dgp.sparse->to_matrix();
        rec.squared_error = (l_hat - l_true).squaredNorm() + (s_hat - s_true).squaredNorm();
        rec.error = (l_hat + s_hat - dgp.coef).norm();
        rec.support = tpr_fpr(fit.sparse, *dgp.sparse);
      }
    } catch (const std::exception& e) {
      rec.failure = e.what();
      if (rec.failure.empty()) rec.failure = "estimator failure";
    }
  });

  std::vector<double> xs, ys;
  for (std::size_t ci = 0; ci < plan.cells.size(); ++ci) {
    CellSummary s;
    s.cell = plan.cells[ci];
    s.abscissa = cell_abscissa(plan.design, plan.estimator, plan.base, s.cell);
    s.complexity = complexity_ar(plan.base.lag_order, s.cell.rank_y, s.cell.rank_x, s.cell.dims);
    s.log_factor = complexity_log_factor(s.cell.dims.size(), plan.base.lag_order, s.cell.rank_y, s.cell.rank_x);
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& rec = diag.records[ci * reps + r];
      if (!rec.failure.empty()) {
        ++s.failures;
        continue;
      }
      ++s.successes;
      s.mean_error += rec.error;
      s.mean_squared_error += rec.squared_error;
      if (rec.support) {
        s.mean_tpr += rec.support->tpr;
        s.mean_fpr += rec.support->fpr;
      }
    }
    if (s.successes > 0) {
      const double n = static_cast<double>(s.successes);
      s.mean_error /= n;
      s.mean_squared_error /= n;
      s.mean_tpr /= n;
      s.mean_fpr /= n;
      xs.push_back(s.abscissa);
      ys.push_back(plan.estimator == EstimatorKind::lrs ? s.mean_squared_error : s.mean_error);
    }
    diag.cells.push_back(std::move(s));
  }

  diag.correlation = pearson(xs, ys);
  if (xs.size() >= 2) {
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    diag.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    diag.intercept = my - diag.slope * mx;
  }
  return diag;
}

}  // namespace cptar
