#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "pnpood/error.hpp"
#include "pnpood/generate.hpp"

using namespace pnpood;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> sentences(std::initializer_list<const char*> lines) {
  std::vector<std::vector<std::string>> out;
  for (const char* line : lines) out.push_back(tokenize(line));
  return out;
}

}  // namespace

TEST_CASE("fit_ngram counts and padding") {
  NGramModel bigram = fit_ngram(sentences({"a b", "a b"}), 2);
  int a = bigram.token_id("a");
  int b = bigram.token_id("b");
  REQUIRE(a >= 0);
  REQUIRE(b >= 0);
  CHECK(bigram.context_counts.at({a}).at(b) == 2);

  SUBCASE("every sentence contributes len+1 events") {
    NGramModel m = fit_ngram(sentences({"a b c", "d e"}), 2);
    CHECK(m.total_events == 4 + 3);
  }
  SUBCASE("trigram contexts of a three-token sentence") {
    NGramModel m = fit_ngram(sentences({"a b c"}), 3);
    CHECK(m.context_counts.size() == 4);  // (BOS,BOS), (BOS,a), (a,b), (b,c)
    int ca = m.token_id("a"), cb = m.token_id("b"), cc = m.token_id("c");
    CHECK(m.context_counts.at({cb, cc}).at(m.eos_id()) == 1);
    CHECK(m.context_counts.at({ca, cb}).at(cc) == 1);
  }
  SUBCASE("order below 2 errors") {
    CHECK_THROWS_AS(fit_ngram(sentences({"a"}), 1), ValidationError);
  }
}

TEST_CASE("next_token_dist smoothing and backoff") {
  // context "the" -> {cat:2, dog:2}
  NGramModel m = fit_ngram(sentences({"the cat", "the cat", "the dog", "the dog"}), 2);

  SUBCASE("symmetric counts give symmetric probabilities") {
    auto dist = next_token_dist(m, {"the"});
    CHECK(dist[m.token_id("cat")] == doctest::Approx(dist[m.token_id("dog")]).epsilon(1e-12));
  }
  SUBCASE("delta -> 0 limit recovers the count ratio") {
    NGramModel skew =
        fit_ngram(sentences({"the cat", "the cat", "the cat", "the dog"}), 2, 1e-12);
    auto dist = next_token_dist(skew, {"the"});
    CHECK(dist[skew.token_id("cat")] == doctest::Approx(0.75).epsilon(1e-9));
  }
  SUBCASE("smoothing gives every word positive probability") {
    auto dist = next_token_dist(m, {"cat"});  // "cat" context only ever saw EOS
    for (double p : dist) CHECK(p > 0.0);
  }
  SUBCASE("distribution sums to one for seen and unseen contexts") {
    for (auto ctx : {std::vector<std::string>{"the"}, std::vector<std::string>{"unseen"},
                     std::vector<std::string>{}}) {
      auto dist = next_token_dist(m, ctx);
      double sum = 0.0;
      for (double p : dist) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("extract_bow scoring") {
  SUBCASE("attribute-only token dominates") {
    // climate: 5 in attr, 0 in ind; the: 50 attr / 60 ind; corpora of 100 tokens
    std::vector<std::vector<std::string>> attr, ind;
    std::vector<std::string> attr_sentence, ind_sentence;
    for (int i = 0; i < 5; ++i) attr_sentence.push_back("climate");
    for (int i = 0; i < 50; ++i) attr_sentence.push_back("the");
    for (int i = 0; i < 45; ++i) attr_sentence.push_back("filler" + std::to_string(i % 9));
    for (int i = 0; i < 60; ++i) ind_sentence.push_back("the");
    for (int i = 0; i < 40; ++i) ind_sentence.push_back("other" + std::to_string(i % 8));
    attr.push_back(attr_sentence);
    ind.push_back(ind_sentence);

    BagOfWords bow = extract_bow(attr, ind, 1);
    REQUIRE(bow.words.size() == 1);
    CHECK(bow.words.begin()->first == "climate");
    CHECK(bow.words.begin()->second > 1000.0);  // ~0.05/eps
  }
  SUBCASE("identical corpora tie at score 1, lexicographic selection") {
    auto corpus = sentences({"delta echo foxtrot delta echo foxtrot delta echo foxtrot"});
    BagOfWords bow = extract_bow(corpus, corpus, 2);
    REQUIRE(bow.words.size() == 2);
    auto it = bow.words.begin();
    CHECK(it->first == "delta");
    CHECK((++it)->first == "echo");
    for (const auto& [w, s] : bow.words) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("tokens below the attribute floor are excluded") {
    auto attr = sentences({"rare word word word word"});  // rare: 1 < 3
    auto ind = sentences({"base base base"});
    BagOfWords bow = extract_bow(attr, ind, 10);
    CHECK(bow.words.count("rare") == 0);
    CHECK(bow.words.count("word") == 1);
  }
}

TEST_CASE("steer") {
  std::vector<double> dist = {0.5, 0.5};

  SUBCASE("boost 1 returns the input bit-for-bit") {
    auto out = steer(dist, std::vector<int>{1}, 1.0);
    CHECK(out == dist);
  }
  SUBCASE("hand-computed boost") {
    auto out = steer(dist, std::vector<int>{1}, 3.0);
    CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("disjoint support returns the input") {
    std::vector<double> d = {0.7, 0.3, 0.0};
    auto out = steer(d, std::vector<int>{2}, 5.0);
    CHECK(out == d);
  }
  SUBCASE("normalization and monotonicity in the boost") {
    std::vector<double> d = {0.1, 0.2, 0.3, 0.4};
    double prev = d[2];
    for (double boost : {1.0, 2.0, 4.0, 8.0, 64.0}) {
      auto out = steer(d, std::vector<int>{2}, boost);
      double sum = 0.0;
      for (double p : out) sum += p;
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(out[2] >= prev - 1e-15);
      prev = out[2];
    }
  }
  SUBCASE("boost below 1 errors") {
    CHECK_THROWS_AS(steer(dist, std::vector<int>{0}, 0.5), ValidationError);
  }
}

TEST_CASE("generate_sentence") {
  GenerationConfig config;
  config.seed_token_count = 2;
  config.max_length = 10;
  config.boost = 1.0;

  SUBCASE("deterministic model yields its unique completion") {
    // only one continuation per context when delta is negligible
    NGramModel m = fit_ngram(sentences({"a b c d"}), 2, 1e-300);
    Rng rng(1);
    auto out = generate_sentence(m, {"a", "b"}, {}, config, rng);
    CHECK(out == std::vector<std::string>{"a", "b", "c", "d"});
  }
  SUBCASE("same rng state gives identical sentences") {
    NGramModel m = fit_ngram(sentences({"a b c", "a b d", "b c a"}), 2);
    Rng r1(42), r2(42);
    CHECK(generate_sentence(m, {"a", "b"}, {}, config, r1) ==
          generate_sentence(m, {"a", "b"}, {}, config, r2));
  }
  SUBCASE("seed length is validated") {
    NGramModel m = fit_ngram(sentences({"a b"}), 2);
    Rng rng(1);
    CHECK_THROWS_AS(generate_sentence(m, {"a"}, {}, config, rng), ValidationError);
  }
  SUBCASE("max_length caps generation") {
    NGramModel m = fit_ngram(sentences({"a a a a a a a a a a a a a a a a"}), 2, 1e-300);
    Rng rng(1);
    auto out = generate_sentence(m, {"a", "a"}, {}, config, rng);
    CHECK(out.size() <= 10);
  }
}

TEST_CASE("boosted words appear more often") {
  NGramModel m = fit_ngram(
      sentences({"x y p q r s", "y x q p s r", "x x y y p p", "q q r r s s"}), 2);
  BagOfWords bow;
  bow.words["p"] = 1.0;

  GenerationConfig config;
  config.seed_token_count = 2;
  config.max_length = 12;

  auto rate = [&](double boost) {
    GenerationConfig c = config;
    c.boost = boost;
    long hits = 0, total = 0;
    for (int i = 0; i < 1000; ++i) {
      Rng rng = Rng::stream(7, i);
      auto out = generate_sentence(m, {"x", "y"}, bow, c, rng);
      for (std::size_t t = 2; t < out.size(); ++t) {
        ++total;
        if (out[t] == "p") ++hits;
      }
    }
    return static_cast<double>(hits) / total;
  };
  CHECK(rate(5.0) > rate(1.0));
}

TEST_CASE("make_ood_candidates") {
  Dataset ind;
  ind.k = 2;
  ind.role = DatasetRole::kInd;
  for (int i = 0; i < 50; ++i) {
    LabeledExample ex;
    ex.raw_text = "w" + std::to_string(i % 7) + " w" + std::to_string((i + 1) % 7) + " tail";
    ex.tokens = tokenize(ex.raw_text);
    ex.class_label = i % 2;
    ind.examples.push_back(ex);
  }
  NGramModel m = fit_ngram(
      [&] {
        std::vector<std::vector<std::string>> c;
        for (const auto& ex : ind.examples) c.push_back(ex.tokens);
        return c;
      }(),
      2);

  GenerationConfig config;
  config.seed_token_count = 2;
  config.max_length = 8;
  config.num_seeds = 50;
  config.samples_per_seed = 1;
  config.rng_seed = 77;

  OodCandidates out = make_ood_candidates(ind, m, {}, config);
  CHECK(out.dataset.size() <= 50);
  CHECK(out.dataset.role == DatasetRole::kOodCandidate);
  REQUIRE(out.provenance.size() == out.dataset.size());

  SUBCASE("every candidate starts with the first two tokens of its source") {
    for (std::size_t i = 0; i < out.dataset.size(); ++i) {
      const auto& src = ind.examples[out.provenance[i].seed_source_id];
      REQUIRE(out.dataset.examples[i].tokens.size() >= 2);
      CHECK(out.dataset.examples[i].tokens[0] == src.tokens[0]);
      CHECK(out.dataset.examples[i].tokens[1] == src.tokens[1]);
    }
  }
  SUBCASE("byte-identical candidate file across runs") {
    OodCandidates again = make_ood_candidates(ind, m, {}, config);
    auto p1 = fs::temp_directory_path() / "pnpood_cand_a.jsonl";
    auto p2 = fs::temp_directory_path() / "pnpood_cand_b.jsonl";
    save_candidates(out, p1.string());
    save_candidates(again, p2.string());
    std::ifstream f1(p1), f2(p2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }
  SUBCASE("short seeds are skipped") {
    Dataset shorties = ind;
    for (auto& ex : shorties.examples) ex.tokens = {"solo"};
    OodCandidates none = make_ood_candidates(shorties, m, {}, config);
    CHECK(none.dataset.size() == 0);
  }
}

TEST_CASE("bow file round trip") {
  BagOfWords bow;
  bow.words["climate"] = 12.5;
  bow.words["earth"] = 3.25;
  auto path = fs::temp_directory_path() / "pnpood_bow.txt";
  save_bow(bow, path.string());
  BagOfWords back = load_bow(path.string());
  REQUIRE(back.words.size() == 2);
  CHECK(back.words.at("climate") == doctest::Approx(12.5));
  CHECK(back.words.at("earth") == doctest::Approx(3.25));

  SUBCASE("words without weights default to 1") {
    auto bare = fs::temp_directory_path() / "pnpood_bow_bare.txt";
    std::ofstream out(bare);
    out << "astronomy\natom\n";
    out.close();
    BagOfWords b = load_bow(bare.string());
    CHECK(b.words.at("astronomy") == doctest::Approx(1.0));
  }
}
