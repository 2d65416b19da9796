#include <benchmark/benchmark.h>

#include "uqlens/analysis.hpp"
#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"
#include "uqlens/surrogate.hpp"
#include "uqlens/uncertainty.hpp"

namespace {

using namespace uqlens;

const EvalPoint kQuery({0.4, -0.2, 0.9, -1.1});

std::unique_ptr<Model> bench_model(ModelKind kind) {
  return make_model(ModelSpec::builtin(kind, 4, 0));
}

void BM_EvalWavelike(benchmark::State& state) {
  const auto model = bench_model(ModelKind::wavelike);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->evaluate(kQuery));
  }
}
BENCHMARK(BM_EvalWavelike);

void BM_EvalRadial(benchmark::State& state) {
  const auto model = bench_model(ModelKind::radial);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->evaluate(kQuery));
  }
}
BENCHMARK(BM_EvalRadial);

void BM_SurrogateFit(benchmark::State& state) {
  const auto model = bench_model(ModelKind::wavelike);
  PerturbationConfig cfg;
  cfg.count = static_cast<int>(state.range(0));
  cfg.seed = 11;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_local_surrogate(*model, kQuery, cfg));
  }
}
BENCHMARK(BM_SurrogateFit)->Arg(50)->Arg(200)->Arg(800);

void BM_ConformalStats(benchmark::State& state) {
  const auto model = bench_model(ModelKind::wavelike);
  PerturbationConfig cfg;
  cfg.count = static_cast<int>(state.range(0));
  cfg.seed = 12;
  for (auto _ : state) {
    benchmark::DoNotOptimize(conformal_stats(*model, kQuery, cfg));
  }
}
BENCHMARK(BM_ConformalStats)->Arg(25)->Arg(200);

void BM_AnalyzePoint(benchmark::State& state) {
  const auto model = bench_model(ModelKind::wavelike);
  AnalysisConfig cfg;
  cfg.surrogate_samples = 200;
  cfg.conformal_samples = 25;
  cfg.replicates = 25;
  cfg.seed = 13;
  for (auto _ : state) {
    benchmark::DoNotOptimize(analyze_point(*model, kQuery, cfg));
  }
}
BENCHMARK(BM_AnalyzePoint);

}  // namespace

BENCHMARK_MAIN();
