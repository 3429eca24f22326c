#include <benchmark/benchmark.h>

#include "pnpood/rng.hpp"
#include "pnpood/train.hpp"

using namespace pnpood;

namespace {

struct BatchFixture {
  ClassifierParams params;
  std::vector<IndExample> ind;
  std::vector<std::vector<double>> ood;

  BatchFixture(int input_dim, int batch) {
    params = init_params(input_dim, {128, 128}, 3, 5);
    Rng rng(6);
    for (int i = 0; i < batch; ++i) {
      std::vector<double> x(input_dim);
      for (double& v : x) v = rng.normal();
      ind.push_back({x, static_cast<int>(rng.below(3))});
      for (double& v : x) v = rng.normal();
      ood.push_back(x);
    }
  }
};

}  // namespace

static void BM_BatchLoss(benchmark::State& state) {
  BatchFixture fx(state.range(0), 32);
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss(fx.params, fx.ind, fx.ood, 1.0));
}
BENCHMARK(BM_BatchLoss)->Range(32, 512);

static void BM_Gradients(benchmark::State& state) {
  BatchFixture fx(state.range(0), 32);
  for (auto _ : state) benchmark::DoNotOptimize(gradients(fx.params, fx.ind, fx.ood, 1.0));
}
BENCHMARK(BM_Gradients)->Range(32, 512);
