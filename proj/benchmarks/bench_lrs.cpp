#include <benchmark/benchmark.h>

#include "cptar/lrs.hpp"
#include "cptar/simulation.hpp"

namespace {

void BM_LassoStep(benchmark::State& state) {
  const auto q = static_cast<std::size_t>(state.range(0));
  cptar::DgpSpec spec;
  spec.dims = {q, q, q};
  spec.lag_order = 2;
  spec.rank_y = 3;
  spec.rank_x = 2;
  spec.sparse_support = 30;
  cptar::Rng rng = cptar::make_stream(23);
  const auto dgp = cptar::simulate_dgp(spec, 600, rng);
  const auto problem = cptar::make_lasso_problem(cptar::make_ar_data(dgp.series, 2));
  const cptar::Matrix fixed = cptar::assemble_coef(dgp.lowrank);
  const double lambda = 0.1 * cptar::lambda_max(problem, fixed);
  for (auto _ : state) benchmark::DoNotOptimize(cptar::lasso_step(problem, fixed, lambda));
}
BENCHMARK(BM_LassoStep)->Arg(3)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace
