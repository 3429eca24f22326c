#include <benchmark/benchmark.h>

#include "pnpood/generate.hpp"
#include "pnpood/rng.hpp"

using namespace pnpood;

namespace {

std::vector<std::vector<std::string>> make_corpus(int sentences, int vocab) {
  Rng rng(3);
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < sentences; ++i) {
    std::vector<std::string> s;
    int len = 6 + static_cast<int>(rng.below(10));
    for (int t = 0; t < len; ++t) s.push_back("w" + std::to_string(rng.below(vocab)));
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

static void BM_FitNgram(benchmark::State& state) {
  auto corpus = make_corpus(state.range(0), 300);
  for (auto _ : state) benchmark::DoNotOptimize(fit_ngram(corpus, 3));
}
BENCHMARK(BM_FitNgram)->Range(128, 4096);

static void BM_GenerateSentence(benchmark::State& state) {
  auto corpus = make_corpus(1000, state.range(0));
  NGramModel model = fit_ngram(corpus, 3);
  BagOfWords bow;
  for (int i = 0; i < 20; ++i) bow.words["w" + std::to_string(i)] = 1.0;
  GenerationConfig config;
  config.max_length = 20;
  std::uint64_t stream = 0;
  for (auto _ : state) {
    Rng rng = Rng::stream(11, stream++);
    benchmark::DoNotOptimize(
        generate_sentence(model, {corpus[0][0], corpus[0][1]}, bow, config, rng));
  }
}
BENCHMARK(BM_GenerateSentence)->Range(64, 1024);
