#include <benchmark/benchmark.h>

#include "bmtl/baselines.hpp"
#include "bmtl/inference.hpp"
#include "bmtl/metrics.hpp"
#include "bmtl/prediction.hpp"
#include "bmtl/synthgen.hpp"

using namespace bmtl;

namespace {

SyntheticData preset(const char* name, std::int64_t d) {
  auto s = *find_scenario(name);
  s.d = d;
  s.seed = 1;
  return generate(s);
}

Hyperparameters hyper(std::size_t T) { return Hyperparameters::from_ratio(0.2, 2.0, static_cast<double>(T) + 2, 1.0, T); }

}  // namespace

// One full coordinate-ascent sweep per iteration.
static void BM_CaviSweep(benchmark::State& state) {
  const auto syn = preset("dataset3", state.range(0));
  const auto h = hyper(syn.dataset.num_tasks());
  FitConfig cfg;
  cfg.max_sweeps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(cavi_fit(syn.dataset, h, cfg));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CaviSweep)->RangeMultiplier(2)->Range(25, 400)->Complexity();

static void BM_CaviFit(benchmark::State& state) {
  const auto syn = preset(state.range(0) == 0 ? "dataset3" : "dataset6", 100);
  const auto h = hyper(syn.dataset.num_tasks());
  for (auto _ : state) benchmark::DoNotOptimize(cavi_fit(syn.dataset, h));
}
BENCHMARK(BM_CaviFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SurrogateElbo(benchmark::State& state) {
  const auto syn = preset("dataset3", 100);
  const auto h = hyper(syn.dataset.num_tasks());
  FitConfig cfg;
  cfg.max_sweeps = 5;
  const auto fit = cavi_fit(syn.dataset, h, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(surrogate_elbo(fit.state, syn.dataset, h));
}
BENCHMARK(BM_SurrogateElbo);

static void BM_L1Logistic(benchmark::State& state) {
  const auto syn = preset("dataset6", 100);
  const auto& task = syn.dataset.task(0);
  const double lambda = 0.1 * lambda_max(task.design, task.labels);
  L1Config cfg;
  cfg.accelerate = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(fit_l1_logistic(task.design, task.labels, lambda, cfg));
}
BENCHMARK(BM_L1Logistic)->Arg(0)->Arg(1);

static void BM_PosteriorDraws(benchmark::State& state) {
  const auto syn = preset("dataset3", 100);
  const auto h = hyper(syn.dataset.num_tasks());
  FitConfig cfg;
  cfg.max_sweeps = 5;
  const auto fit = cavi_fit(syn.dataset, h, cfg);
  const auto S = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_posterior(fit.state, S, 3));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PosteriorDraws)->Arg(100)->Arg(1000);

static void BM_AveragePrecision(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> y(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (i * 7919) % 3 == 0 ? 1.0 : 0.0;
    s[i] = static_cast<double>((i * 104729) % 1000) / 1000.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(y, s));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
