#include "cellguard/estimators.hpp"
#include "cellguard/filter.hpp"
#include "cellguard/robust_scale.hpp"
#include "cellguard/simulation.hpp"

#include <benchmark/benchmark.h>

using namespace cellguard;

namespace {

DataMatrix contaminated(int p, int n, std::uint64_t seed) {
  Rng rng(seed);
  const TrueModel model = random_correlation(p, 100.0, rng);
  return contaminate_icm(sample_model(model, n, rng), 0.1, 10.0, rng);
}

}  // namespace

static void BM_TuningConstant(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(tuning_constant(k));
}
BENCHMARK(BM_TuningConstant)->Arg(1)->Arg(10)->Arg(50);

static void BM_Mscale(benchmark::State& state) {
  const auto [x, fr] = apply_filter(contaminated(10, static_cast<int>(state.range(0)), 1));
  const auto table = TuningTable::cached(10);
  const Estimate start = em_mle(x);
  const ScaleProblem prob{start.mu, start.sigma, start.sigma, &x};
  for (auto _ : state) benchmark::DoNotOptimize(generalized_mscale(prob, *table));
}
BENCHMARK(BM_Mscale)->Arg(100)->Arg(1000);

static void BM_Filter(benchmark::State& state) {
  const DataMatrix x = contaminated(10, static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(apply_filter(x));
}
BENCHMARK(BM_Filter)->Arg(100)->Arg(1000);

static void BM_EmMle(benchmark::State& state) {
  const auto [x, fr] = apply_filter(contaminated(10, static_cast<int>(state.range(0)), 3));
  for (auto _ : state) benchmark::DoNotOptimize(em_mle(x));
}
BENCHMARK(BM_EmMle)->Arg(100)->Arg(1000);

static void BM_Tsgs(benchmark::State& state) {
  const DataMatrix x = contaminated(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 4);
  GseConfig cfg;
  cfg.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(tsgs(x, {}, cfg));
}
BENCHMARK(BM_Tsgs)->Args({5, 100})->Args({10, 100})->Args({10, 400})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
