#include <benchmark/benchmark.h>

#include "pspin/exact.hpp"
#include "pspin/model.hpp"
#include "pspin/sampler.hpp"

namespace {

using namespace pspin;

ModelParameters mixed_params(int n) {
  ModelParameters p;
  p.n_sites = n;
  p.terms = {{1, 0.5}, {2, 0.9}, {3, 0.4}};
  p.field = 0.2;
  return p;
}

void BM_DrawDisorder(benchmark::State& state) {
  const auto params = mixed_params(static_cast<int>(state.range(0)));
  std::uint64_t index = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(draw_disorder(params, 1, index++));
  }
}
BENCHMARK(BM_DrawDisorder)->Arg(8)->Arg(16)->Arg(32);

void BM_HamiltonianP(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const auto params = mixed_params(n);
  const auto disorder = draw_disorder(params, 2, 0);
  CounterRng rng(derive_stream_key({1, kTagScratch}));
  const auto config = SpinConfiguration::random(n, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hamiltonian_p(config, disorder, p));
  }
}
BENCHMARK(BM_HamiltonianP)->Args({16, 2})->Args({16, 3})->Args({32, 2});

void BM_FlipDelta(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto params = mixed_params(n);
  const auto disorder = draw_disorder(params, 3, 0);
  CounterRng rng(derive_stream_key({2, kTagScratch}));
  auto config = SpinConfiguration::random(n, rng);
  int site = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(flip_delta(config, site, disorder, params));
    site = (site + 1) % n;
  }
}
BENCHMARK(BM_FlipDelta)->Arg(8)->Arg(16);

void BM_MetropolisSweep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto params = mixed_params(n);
  const auto disorder = draw_disorder(params, 4, 0);
  FlipDeltaEngine engine(disorder, params);
  CounterRng init(derive_stream_key({3, kTagScratch}));
  ChainState chain{SpinConfiguration::random(n, init), 0.0, 0, 0,
                   derive_stream_key({4, kTagScratch}), 0};
  resync_energy(chain, engine, disorder, params);
  for (auto _ : state) {
    metropolis_sweep(chain, engine, 1.0);
  }
  benchmark::DoNotOptimize(chain.cached_energy);
}
BENCHMARK(BM_MetropolisSweep)->Arg(8)->Arg(16);

void BM_GibbsTable(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto params = mixed_params(n);
  const auto disorder = draw_disorder(params, 5, 0);
  for (auto _ : state) {
    GibbsTable table(disorder, params);
    benchmark::DoNotOptimize(table.log_partition());
  }
}
BENCHMARK(BM_GibbsTable)->Arg(10)->Arg(14);

}  // namespace

BENCHMARK_MAIN();
