#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pnpood/corpus.hpp"

namespace pnpood {

struct WordVectors {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> table;
};

struct SentenceEmbedding {
  std::vector<double> vector;
  int known_token_count = 0;
};

/// Word-vector text format: one token followed by `dim` decimals per line,
/// whitespace separated. The dimension is inferred from the first line and
/// enforced on the rest. Throws ValidationError naming the bad line.
WordVectors load_word_vectors(const std::string& path);

void save_word_vectors(const WordVectors& wv, const std::string& path);

/// Mean of the vectors of tokens present in `wv`; unknown tokens are
/// skipped rather than mapped to an unk vector. All-unknown sentences get
/// the zero vector with known_token_count 0.
SentenceEmbedding embed_sentence(const std::vector<std::string>& tokens, const WordVectors& wv);

/// Precomputed-embedding format: first line "N dim", then N rows of dim
/// decimals, row i aligned with example i of the accompanying dataset.
std::vector<SentenceEmbedding> load_precomputed(const std::string& path);

/// One embedding per example, in dataset order.
std::vector<SentenceEmbedding> embed_dataset(const Dataset& dataset, const WordVectors& wv);

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace pnpood
