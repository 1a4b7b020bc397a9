#include <benchmark/benchmark.h>

#include "cptar/als.hpp"
#include "cptar/simulation.hpp"

namespace {

cptar::SimulatedDgp make_dgp(std::size_t q, std::size_t length) {
  cptar::DgpSpec spec;
  spec.dims = {q, q, q};
  spec.lag_order = 2;
  spec.rank_y = 3;
  spec.rank_x = 2;
  cptar::Rng rng = cptar::make_stream(17);
  return cptar::simulate_dgp(spec, length, rng);
}

struct Fixture {
  cptar::RegressionData data;
  cptar::AlsState state;
};

Fixture make_fixture(std::size_t q) {
  const auto dgp = make_dgp(q, 500);
  Fixture f{cptar::make_ar_data(dgp.series, 2), {}};
  cptar::Rng rng = cptar::make_stream(3);
  f.state = cptar::random_init(f.data, 3, 2, rng);
  return f;
}

void BM_UpdateU(benchmark::State& state) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cptar::update_u_block(f.state, 0, f.data));
}
BENCHMARK(BM_UpdateU)->Arg(4)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_UpdateV(benchmark::State& state) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cptar::update_v_block(f.state, 0, f.data));
}
BENCHMARK(BM_UpdateV)->Arg(4)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_UpdateG(benchmark::State& state) {
  const auto f = make_fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cptar::update_g(f.state, f.data));
}
BENCHMARK(BM_UpdateG)->Arg(4)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_AlsFit(benchmark::State& state) {
  const auto dgp = make_dgp(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  cptar::AlsConfig cfg;
  cfg.num_restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(cptar::als_fit(dgp.series, 2, 3, 2, cfg));
}
BENCHMARK(BM_AlsFit)->Args({5, 500})->Args({5, 1000})->Unit(benchmark::kMillisecond);

}  // namespace
