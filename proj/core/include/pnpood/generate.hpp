#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pnpood/corpus.hpp"
#include "pnpood/rng.hpp"

namespace pnpood {

/// Count-based n-gram language model with additive smoothing and a
/// unigram backoff for unseen contexts. Token ids are interned per model;
/// EOS occupies the id one past the vocabulary, begin-of-sentence markers
/// never appear in output distributions.
struct NGramModel {
  int n = 3;
  double delta = 0.1;  // additive smoothing constant

  std::vector<std::string> tokens;  // id -> token
  std::map<std::string, int> ids;   // token -> id
  std::map<std::vector<int>, std::map<int, long>> context_counts;
  std::map<int, long> next_counts;  // marginal next-token events, EOS included
  long total_events = 0;

  int vocab_size() const { return static_cast<int>(tokens.size()); }
  int eos_id() const { return vocab_size(); }
  /// -1 for tokens the model has never seen.
  int token_id(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? -1 : it->second;
  }
};

/// Steering keyword set; weights are positive relevance scores.
struct BagOfWords {
  std::map<std::string, double> words;
};

struct GenerationConfig {
  int seed_token_count = 2;
  int max_length = 30;     // tokens, seed included
  double boost = 5.0;      // multiplicative lift on bag-of-words tokens
  int samples_per_seed = 1;
  int num_seeds = 0;       // seed sentences drawn; 0 means one per IND example
  std::uint64_t rng_seed = 0;
};

/// Counts every (n-1)-token context -> next-token event. Each sentence is
/// padded with n-1 begin markers and one end marker, so a sentence of
/// length L contributes exactly L+1 events.
NGramModel fit_ngram(const std::vector<std::vector<std::string>>& corpus, int n,
                     double delta = 0.1);

/// Smoothed next-token distribution over vocabulary + EOS (EOS last).
/// Contexts never seen (including those containing unknown tokens) back off
/// to the smoothed unigram distribution. Sums to 1.
std::vector<double> next_token_dist(const NGramModel& model,
                                    const std::vector<std::string>& context);

/// Scores token t as (freq_attr(t)+eps)/(freq_ind(t)+eps) with eps = 1e-6
/// over relative frequencies, keeps tokens appearing at least 3 times in
/// the attribute corpus, and returns the top_k by score (ties broken
/// lexicographically). Returns fewer with a warning to stderr when not
/// enough tokens qualify.
BagOfWords extract_bow(const std::vector<std::vector<std::string>>& attribute_corpus,
                       const std::vector<std::vector<std::string>>& ind_corpus, int top_k);

/// Multiplies entries at `bow_indices` by `boost` and renormalizes.
/// boost == 1 and disjoint-support cases return the input bit-for-bit.
std::vector<double> steer(const std::vector<double>& dist, const std::vector<int>& bow_indices,
                          double boost);

/// Model-aware overload: resolves bag-of-words tokens to distribution
/// indices (unknown words steer nothing).
std::vector<double> steer(const std::vector<double>& dist, const NGramModel& model,
                          const BagOfWords& bow, double boost);

/// Autoregressive sampling from the steered next-token distribution until
/// EOS or config.max_length. Output begins with seed_tokens. Deterministic
/// under the rng state.
std::vector<std::string> generate_sentence(const NGramModel& model,
                                           const std::vector<std::string>& seed_tokens,
                                           const BagOfWords& bow, const GenerationConfig& config,
                                           Rng& rng);

struct CandidateProvenance {
  int seed_source_id = -1;     // index of the IND example whose prefix seeded this
  std::uint64_t rng_stream = 0;
};

struct OodCandidates {
  Dataset dataset;  // role OOD-candidate
  std::vector<CandidateProvenance> provenance;
};

/// Draws num_seeds random IND sentences, seeds each with its first
/// seed_token_count tokens, and generates samples_per_seed sentences per
/// seed. Sentences shorter than the seed length are skipped with a warning.
/// Every sample owns rng stream `sample index`, so output is byte-stable
/// and generation could run in parallel.
OodCandidates make_ood_candidates(const Dataset& ind_dataset, const NGramModel& model,
                                  const BagOfWords& bow, const GenerationConfig& config);

/// Candidate JSONL: {"text", "seed_source_id", "rng_stream"} per line.
void save_candidates(const OodCandidates& candidates, const std::string& path);
OodCandidates load_candidates(const std::string& path);

/// Bag-of-words file: one "word weight" pair per line.
BagOfWords load_bow(const std::string& path);
void save_bow(const BagOfWords& bow, const std::string& path);

}  // namespace pnpood
