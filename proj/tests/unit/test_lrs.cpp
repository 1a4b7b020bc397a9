#include <doctest.h>

#include <cmath>

#include "cptar/error.hpp"
#include "cptar/lrs.hpp"
#include "cptar/simulation.hpp"
#include "oracles.hpp"

using namespace cptar;

namespace {

struct LassoFixture {
  Matrix series;
  oracle::Problem problem;
  RegressionData data;
  LassoProblem lasso;
  Matrix fixed;
};

LassoFixture make_fixture(Rng& rng, Eigen::Index q, std::size_t p, Eigen::Index t) {
  LassoFixture f;
  f.series = oracle::gaussian(q, t, rng);
  f.problem = oracle::ar_problem(f.series, p);
  f.data = make_ar_data(TensorSeries::from_columns(Shape{static_cast<std::size_t>(q)}, f.series), p);
  f.lasso = make_lasso_problem(f.data);
  f.fixed = 0.1 * oracle::gaussian(q, q * static_cast<Eigen::Index>(p), rng);
  return f;
}

}  // namespace

TEST_CASE("trim clips entries to the box") {
  Matrix m(1, 3);
  m << 0.7, -0.3, -0.6;
  const Matrix t = trim(m, 0.5);
  CHECK(t(0, 0) == 0.5);
  CHECK(t(0, 1) == -0.3);
  CHECK(t(0, 2) == -0.5);
  CHECK(trim(t, 0.5) == t);
  const DenseTensor d(Shape{3}, {0.7, -0.3, -0.6});
  CHECK(trim(d, 0.5).data() == Vector(t.row(0).transpose()));
  CHECK(trim(m, 1.0) == m);
}

TEST_CASE("lasso matrices equal the explicit sample moments") {
  Rng rng = make_stream(51);
  const auto f = make_fixture(rng, 3, 2, 25);
  const double n = static_cast<double>(f.problem.y.cols());
  CHECK(f.lasso.gram.isApprox(f.problem.x * f.problem.x.transpose() / n, 1e-12));
  CHECK(f.lasso.cross.isApprox(f.problem.y * f.problem.x.transpose() / n, 1e-12));
}

TEST_CASE("lambda above lambda_max gives an empty sparse part") {
  Rng rng = make_stream(52);
  const auto f = make_fixture(rng, 3, 2, 30);
  const double lmax = lambda_max(f.lasso, f.fixed);
  CHECK(lmax == doctest::Approx(oracle::loss_gradient(f.fixed, f.problem).cwiseAbs().maxCoeff()));
  CHECK(lasso_step(f.lasso, f.fixed, lmax * 1.0001).support_size() == 0);
  CHECK(lasso_step(f.lasso, f.fixed, lmax * 0.9).support_size() > 0);
}

TEST_CASE("single-coordinate lasso matches a scalar minimizer") {
  // Q = 1, P = 1: the problem is scalar and convex.
  Rng rng = make_stream(53);
  for (int rep = 0; rep < 10; ++rep) {
    const auto f = make_fixture(rng, 1, 1, 20);
    const double lambda = 0.05 * (rep + 1);
    auto objective = [&](double s) {
      Matrix a = f.fixed;
      a(0, 0) += s;
      return oracle::loss(a, f.problem) + lambda * std::abs(s);
    };
    const double expect = oracle::golden_min(objective, -10.0, 10.0);
    const double got = lasso_step(f.lasso, f.fixed, lambda).get({0, 0, 0});
    CHECK(got == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("lasso solution satisfies the KKT conditions") {
  Rng rng = make_stream(54);
  for (int rep = 0; rep < 10; ++rep) {
    const auto f = make_fixture(rng, 3, 1 + static_cast<std::size_t>(rep % 2), 40);
    const double lambda = lambda_max(f.lasso, f.fixed) * (0.1 + 0.08 * rep);
    const SparseCoef s = lasso_step(f.lasso, f.fixed, lambda, {1e-13, 100000});
    CHECK(oracle::kkt_violation(f.fixed, s.to_matrix(), f.problem, lambda) < 1e-8);
  }
}

TEST_CASE("warm-started lasso reaches the same solution") {
  Rng rng = make_stream(55);
  const auto f = make_fixture(rng, 3, 2, 40);
  const double lmax = lambda_max(f.lasso, f.fixed);
  const SparseCoef cold = lasso_step(f.lasso, f.fixed, 0.2 * lmax, {1e-13, 100000});
  const SparseCoef start = lasso_step(f.lasso, f.fixed, 0.5 * lmax);
  std::size_t sweeps = 0;
  const SparseCoef warm = lasso_step(f.lasso, f.fixed, 0.2 * lmax, {1e-13, 100000}, &start, &sweeps);
  CHECK(sweeps > 0);
  CHECK(warm.to_matrix().isApprox(cold.to_matrix(), 1e-8));
}

TEST_CASE("penalized objective equals the naive evaluation") {
  Rng rng = make_stream(56);
  const auto f = make_fixture(rng, 3, 2, 30);
  const SparseCoef s = lasso_step(f.lasso, f.fixed, 0.3 * lambda_max(f.lasso, f.fixed));
  const double lambda = 0.7;
  const auto obj = penalized_objective(f.fixed, s, f.data, lambda, 0.05);
  const double l1 = s.to_matrix().cwiseAbs().sum();
  CHECK(obj.loss == doctest::Approx(oracle::loss(f.fixed + s.to_matrix(), f.problem)).epsilon(1e-10));
  CHECK(obj.penalty == doctest::Approx(lambda * l1));
  CHECK(obj.value == doctest::Approx(obj.loss + obj.penalty));
  CHECK(obj.lowrank_max_abs == doctest::Approx(f.fixed.cwiseAbs().maxCoeff()));
  CHECK(obj.lowrank_constraint_ok == (f.fixed.cwiseAbs().maxCoeff() <= 0.05));
}

TEST_CASE("SparseCoef storage, norms and layout") {
  SparseCoef s(Shape{2, 2}, 2);
  CHECK(s.tensor_shape() == Shape{2, 2, 2, 2, 2});
  CHECK(s.num_positions() == 32);
  s.set({1, 1, 3}, -2.0);
  s.set({0, 0, 2}, 1.5);
  s.set({0, 0, 1}, 0.0);
  CHECK(s.support_size() == 2);
  CHECK(s.l1_norm() == doctest::Approx(3.5));
  CHECK(s.squared_norm() == doctest::Approx(6.25));
  const Matrix m = s.to_matrix();
  CHECK(m(1, 4 + 3) == -2.0);
  CHECK(m(0, 2) == 1.5);
  CHECK(SparseCoef::from_matrix(Shape{2, 2}, 2, m).entries() == s.entries());
  s.set({1, 1, 3}, 0.0);
  CHECK(s.support_size() == 1);
  CHECK_THROWS_AS(s.set({4, 0, 0}, 1.0), Error);
  CHECK_THROWS_AS(s.set({0, 2, 0}, 1.0), Error);

  const auto idx = s.multi_index({1, 1, 2});
  CHECK(idx == std::vector<std::size_t>{1, 0, 1, 0, 1});
  CHECK(s.from_multi_index(idx) == SparseIndex{1, 1, 2});

  Rng rng = make_stream(57);
  const Vector x = oracle::gaussian(8, 1, rng).col(0);
  CHECK(s.apply(x).isApprox(s.to_matrix() * x, 1e-14));
  s.scale(2.0);
  CHECK(s.get({0, 0, 2}) == 3.0);
}

TEST_CASE("huge lambda reduces lrs_fit to ALS") {
  Rng rng = make_stream(58);
  for (NoiseKind noise : {NoiseKind::none, NoiseKind::std_normal}) {
    DgpSpec spec;
    spec.dims = {2, 3};
    spec.lag_order = 1;
    spec.rank_y = 1;
    spec.rank_x = 1;
    spec.noise = noise;
    const auto dgp = simulate_dgp(spec, 150, rng);
    LrsConfig cfg;
    cfg.lambda = 1e6;
    cfg.alpha_l = 1e6;
    cfg.als.rel_tol = 1e-13;
    cfg.als.max_iters = 5000;
    cfg.als.rng_seed = 3;
    const auto lrs = lrs_fit(dgp.series, 1, 1, 1, cfg);
    CHECK(lrs.sparse.support_size() == 0);
    const auto als = als_fit(dgp.series, 1, 1, 1, cfg.als);
    CHECK(als.report.converged);
    CHECK((assemble_coef(lrs.lowrank) - assemble_coef(als.coef)).norm() <= 1e-6);
    CHECK(lrs.constraint_satisfied);
  }
}

TEST_CASE("lrs_fit objective trace and determinism") {
  Rng rng = make_stream(59);
  DgpSpec spec;
  spec.dims = {3, 3};
  spec.lag_order = 1;
  spec.rank_y = 1;
  spec.rank_x = 1;
  spec.sparse_support = 3;
  const auto dgp = simulate_dgp(spec, 200, rng);
  LrsConfig cfg;
  cfg.lambda = 0.02;
  cfg.als.rng_seed = 4;
  cfg.als.num_restarts = 2;
  const auto a = lrs_fit(dgp.series, 1, 1, 1, cfg);
  const auto b = lrs_fit(dgp.series, 1, 1, 1, cfg);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(a.sparse.entries() == b.sparse.entries());
  CHECK(a.outer_iterations == a.objective_trace.size());
  CHECK(a.zeta == doctest::Approx(cfg.zeta(1, 9)));
  CHECK(cfg.zeta(1, 9) == doctest::Approx(std::sqrt(1.0) * 9.0 / 81.0));
  CHECK(a.constraint_satisfied == (assemble_coef(a.lowrank).cwiseAbs().maxCoeff() <= a.zeta));
}

TEST_CASE("LrsConfig validation") {
  LrsConfig cfg;
  cfg.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.alpha_l = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  CHECK(cfg.resolved_alpha(4, 10) == doctest::Approx(20.0));
}
