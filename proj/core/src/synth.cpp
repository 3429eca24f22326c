#include "pnpood/synth.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnpood/corpus.hpp"
#include "pnpood/embed.hpp"
#include "pnpood/error.hpp"
#include "pnpood/rng.hpp"

namespace fs = std::filesystem;

namespace pnpood {

namespace {

const char* const kConsonants = "bdfgklmnprstvz";
const char* const kVowels = "aeiou";

// Pronounceable pseudo-word, unique within `used`.
std::string make_word(Rng& rng, std::set<std::string>& used) {
  for (;;) {
    int syllables = 2 + static_cast<int>(rng.below(3));
    std::string word;
    for (int s = 0; s < syllables; ++s) {
      word.push_back(kConsonants[rng.below(14)]);
      word.push_back(kVowels[rng.below(5)]);
    }
    if (used.insert(word).second) return word;
  }
}

std::vector<std::string> make_pool(Rng& rng, std::set<std::string>& used, int count) {
  std::vector<std::string> pool;
  pool.reserve(count);
  for (int i = 0; i < count; ++i) pool.push_back(make_word(rng, used));
  return pool;
}

std::vector<double> make_direction(Rng& rng, int dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

void add_pool_vectors(WordVectors& wv, Rng& rng, const std::vector<std::string>& pool,
                      const std::vector<double>& direction, double noise) {
  for (const auto& word : pool) {
    std::vector<double> vec(direction.size());
    for (std::size_t d = 0; d < vec.size(); ++d) vec[d] = direction[d] + noise * rng.normal();
    wv.table[word] = std::move(vec);
  }
}

std::string sample_sentence(Rng& rng, const SynthConfig& cfg,
                            const std::vector<const std::vector<std::string>*>& pools,
                            const std::vector<double>& pool_probs) {
  const int len = cfg.min_len + static_cast<int>(rng.below(cfg.max_len - cfg.min_len + 1));
  std::vector<std::string> tokens;
  tokens.reserve(len);
  for (int i = 0; i < len; ++i) {
    double u = rng.uniform();
    std::size_t p = 0;
    double cum = 0.0;
    for (; p < pool_probs.size(); ++p) {
      cum += pool_probs[p];
      if (u < cum) break;
    }
    if (p >= pools.size()) p = pools.size() - 1;
    const auto& pool = *pools[p];
    tokens.push_back(pool[rng.below(pool.size())]);
  }
  return join_tokens(tokens);
}

}  // namespace

SynthPaths make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.out_dir.empty()) throw ValidationError("synth: out_dir is required");
  if (cfg.classes < 2) throw ValidationError("synth: need at least 2 classes");
  if (cfg.min_len < 2 || cfg.max_len < cfg.min_len)
    throw ValidationError("synth: bad sentence length range");
  if (cfg.eval_overlap < 0 || cfg.eval_overlap > 1)
    throw ValidationError("synth: eval_overlap must lie in [0,1]");
  fs::create_directories(cfg.out_dir);

  Rng vocab_rng = Rng::stream(cfg.seed, 1);
  std::set<std::string> used;

  std::vector<std::vector<std::string>> class_pools;
  for (int c = 0; c < cfg.classes; ++c)
    class_pools.push_back(make_pool(vocab_rng, used, cfg.class_words));
  auto shared_pool = make_pool(vocab_rng, used, cfg.shared_words);
  auto attr_pool = make_pool(vocab_rng, used, cfg.attribute_words);

  // gamma's vocabulary: a fraction copied from the IND vocabulary, the rest
  // its own words
  std::vector<std::string> ind_vocab = shared_pool;
  for (const auto& pool : class_pools) ind_vocab.insert(ind_vocab.end(), pool.begin(), pool.end());
  const int overlap_count = static_cast<int>(cfg.eval_words * cfg.eval_overlap);
  std::vector<std::string> eval_shared, eval_own;
  {
    std::vector<std::string> shuffled = ind_vocab;
    vocab_rng.shuffle(shuffled);
    for (int i = 0; i < overlap_count && i < static_cast<int>(shuffled.size()); ++i)
      eval_shared.push_back(shuffled[i]);
    eval_own = make_pool(vocab_rng, used, cfg.eval_words - static_cast<int>(eval_shared.size()));
  }

  // word vectors: every pool scatters around its own direction; overlap
  // words keep their IND vectors
  Rng vec_rng = Rng::stream(cfg.seed, 2);
  WordVectors wv;
  wv.dim = cfg.dim;
  for (int c = 0; c < cfg.classes; ++c)
    add_pool_vectors(wv, vec_rng, class_pools[c], make_direction(vec_rng, cfg.dim),
                     cfg.vector_noise);
  auto shared_dir = make_direction(vec_rng, cfg.dim);
  add_pool_vectors(wv, vec_rng, shared_pool, shared_dir, cfg.vector_noise);
  add_pool_vectors(wv, vec_rng, attr_pool, make_direction(vec_rng, cfg.dim), cfg.vector_noise);
  {
    auto fresh = make_direction(vec_rng, cfg.dim);
    std::vector<double> eval_dir(cfg.dim);
    for (int d = 0; d < cfg.dim; ++d)
      eval_dir[d] =
          cfg.eval_dir_alignment * shared_dir[d] + (1.0 - cfg.eval_dir_alignment) * fresh[d];
    add_pool_vectors(wv, vec_rng, eval_own, eval_dir, cfg.vector_noise);
  }

  // sentences
  Rng text_rng = Rng::stream(cfg.seed, 3);
  Dataset ind;
  ind.k = cfg.classes;
  ind.role = DatasetRole::kInd;
  for (int i = 0; i < cfg.sentences_per_domain; ++i) {
    const int c = i % cfg.classes;
    LabeledExample ex;
    ex.raw_text = sample_sentence(text_rng, cfg, {&class_pools[c], &shared_pool},
                                  {cfg.class_token_rate, 1.0 - cfg.class_token_rate});
    ex.tokens = tokenize(ex.raw_text);
    ex.class_label = c;
    ex.domain_tag = "alpha";
    ind.examples.push_back(std::move(ex));
  }

  Dataset attribute;
  attribute.role = DatasetRole::kOodEval;  // real out-domain text; used for training OOD
  for (int i = 0; i < cfg.sentences_per_domain; ++i) {
    LabeledExample ex;
    ex.raw_text = sample_sentence(text_rng, cfg, {&attr_pool}, {1.0});
    ex.tokens = tokenize(ex.raw_text);
    ex.domain_tag = "beta";
    attribute.examples.push_back(std::move(ex));
  }

  Dataset eval;
  eval.role = DatasetRole::kOodEval;
  for (int i = 0; i < cfg.sentences_per_domain; ++i) {
    LabeledExample ex;
    ex.raw_text = sample_sentence(text_rng, cfg, {&eval_shared, &eval_own},
                                  {cfg.eval_ind_token_rate, 1.0 - cfg.eval_ind_token_rate});
    ex.tokens = tokenize(ex.raw_text);
    ex.domain_tag = "gamma";
    eval.examples.push_back(std::move(ex));
  }

  auto splits = split(ind, SplitRatios{0.8, 0.1, 0.1}, mix64(cfg.seed ^ 0x5137));

  SynthPaths paths;
  const fs::path dir(cfg.out_dir);
  paths.ind_train = (dir / "ind_train.jsonl").string();
  paths.ind_val = (dir / "ind_val.jsonl").string();
  paths.ind_test = (dir / "ind_test.jsonl").string();
  paths.ood_eval = (dir / "ood_eval.jsonl").string();
  paths.attribute = (dir / "attribute.jsonl").string();
  paths.word_vectors = (dir / "vectors.txt").string();
  paths.manifest = (dir / "synth.json").string();

  save_dataset_jsonl(splits.train, paths.ind_train);
  save_dataset_jsonl(splits.val, paths.ind_val);
  save_dataset_jsonl(splits.test, paths.ind_test);
  save_dataset_jsonl(eval, paths.ood_eval);
  save_dataset_jsonl(attribute, paths.attribute);
  save_word_vectors(wv, paths.word_vectors);

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["sentences_per_domain"] = cfg.sentences_per_domain;
  manifest["classes"] = cfg.classes;
  manifest["dim"] = cfg.dim;
  manifest["eval_overlap"] = cfg.eval_overlap;
  manifest["eval_ind_token_rate"] = cfg.eval_ind_token_rate;
  manifest["domains"] = {{"ind", "alpha"}, {"attribute", "beta"}, {"ood_eval", "gamma"}};
  manifest["vocab"] = {{"class_words", cfg.class_words},
                       {"shared_words", cfg.shared_words},
                       {"attribute_words", cfg.attribute_words},
                       {"eval_words", cfg.eval_words}};
  std::ofstream mf(paths.manifest);
  if (!mf) throw ValidationError("cannot write manifest: " + paths.manifest);
  mf << manifest.dump(2) << '\n';

  return paths;
}

}  // namespace pnpood
