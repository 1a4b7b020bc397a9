#include <benchmark/benchmark.h>

#include <random>

#include "cptar/rng.hpp"
#include "cptar/tensor.hpp"

namespace {

cptar::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  cptar::Rng rng = cptar::make_stream(seed);
  std::normal_distribution<double> nd;
  cptar::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

void BM_KhatriRaoChain(benchmark::State& state) {
  const auto q = state.range(0);
  std::vector<cptar::Matrix> factors;
  for (int m = 0; m < 3; ++m) factors.push_back(random_matrix(q, 3, static_cast<std::uint64_t>(m)));
  for (auto _ : state) benchmark::DoNotOptimize(cptar::khatri_rao_chain(factors));
}
BENCHMARK(BM_KhatriRaoChain)->Arg(5)->Arg(10)->Arg(20);

void BM_ModeMatricize(benchmark::State& state) {
  const auto q = static_cast<std::size_t>(state.range(0));
  const cptar::Shape s{q, q, q};
  const cptar::DenseTensor t(s, cptar::Vector(random_matrix(static_cast<Eigen::Index>(q * q * q), 1, 7).col(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cptar::mode_matricize(t, 1));
}
BENCHMARK(BM_ModeMatricize)->Arg(5)->Arg(10)->Arg(20);

}  // namespace
