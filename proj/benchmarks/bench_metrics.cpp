#include <benchmark/benchmark.h>

#include "pnpood/metrics.hpp"
#include "pnpood/rng.hpp"

using namespace pnpood;

namespace {

std::vector<ScoredSample> make_scores(std::size_t n) {
  Rng rng(7);
  std::vector<ScoredSample> samples(n);
  for (auto& s : samples) {
    s.score = rng.uniform();
    s.is_ood = rng.uniform() < 0.3;
  }
  samples.front().is_ood = true;
  samples.back().is_ood = false;
  return samples;
}

}  // namespace

static void BM_Auroc(benchmark::State& state) {
  auto samples = make_scores(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(auroc(samples));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auroc)->Range(256, 1 << 16)->Complexity();

static void BM_Aupr(benchmark::State& state) {
  auto samples = make_scores(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(aupr(samples));
}
BENCHMARK(BM_Aupr)->Range(256, 1 << 16);

static void BM_FprAtTpr(benchmark::State& state) {
  auto samples = make_scores(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fpr_at_tpr(samples, 0.9));
}
BENCHMARK(BM_FprAtTpr)->Range(256, 1 << 12);

static void BM_Ece(benchmark::State& state) {
  Rng rng(9);
  std::vector<EceInput> inputs(state.range(0));
  for (auto& in : inputs) {
    in.confidence = rng.uniform(0.25, 1.0);
    in.correct = rng.uniform() < in.confidence;
  }
  for (auto _ : state) benchmark::DoNotOptimize(ece(inputs, 15));
}
BENCHMARK(BM_Ece)->Range(256, 1 << 16);
