#include <benchmark/benchmark.h>

#include "branchcap/experiments.hpp"
#include "branchcap/laws.hpp"
#include "branchcap/maps.hpp"
#include "branchcap/rng.hpp"
#include "branchcap/simulate.hpp"
#include "branchcap/stats.hpp"
#include "branchcap/wlimit.hpp"

namespace {

using namespace branchcap;

void BM_UniformAt(benchmark::State& state) {
  std::uint64_t j = 0;
  double acc = 0.0;
  for (auto _ : state) {
    acc += rng::uniform_at(42, 3, ++j);
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_UniformAt);

void BM_ExactGeneration(benchmark::State& state) {
  const auto law = OffspringLaw::binary_split(0.5, 1.0);
  const auto sampler = law.make_sampler(0.1, 1e6);
  const std::uint64_t parents = state.range();
  for (auto _ : state) {
    std::uint64_t total = 0;
    for (std::uint64_t j = 1; j <= parents; ++j)
      total += sampler(rng::uniform_at(7, 1, j));
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(state.iterations() * parents);
}
BENCHMARK(BM_ExactGeneration)->RangeMultiplier(8)->Range(64, 1 << 18);

void BM_FastPath(benchmark::State& state) {
  // whole path to detection time at K = 1e6
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  SimConfig cfg;
  cfg.capacity = 1e6;
  cfg.initial_count = 1;
  cfg.max_generations = 20;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = ++seed;
    benchmark::DoNotOptimize(simulate_fast(law, cfg));
  }
}
BENCHMARK(BM_FastPath);

void BM_SampleW(benchmark::State& state) {
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_w(law, 1, 30, ++seed, 100));
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_SampleW);

void BM_ComputeH(benchmark::State& state) {
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_h(map, 2.0, 1025, 1e-8));
  }
}
BENCHMARK(BM_ComputeH);

void BM_KsTwoSample(benchmark::State& state) {
  const std::size_t n = state.range();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng::uniform_at(1, 0, i);
    b[i] = rng::uniform_at(2, 0, i);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(ks_two_sample(a, b));
  }
}
BENCHMARK(BM_KsTwoSample)->RangeMultiplier(4)->Range(256, 1 << 14);

}  // namespace

BENCHMARK_MAIN();
