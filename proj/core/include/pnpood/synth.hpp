#pragma once

#include <cstdint>
#include <string>

namespace pnpood {

/// Generator for the bundled synthetic detection benchmark: an IND domain
/// ("alpha") with three classes, an evaluation OOD domain ("gamma") whose
/// vocabulary overlaps the IND vocabulary by a configurable fraction, and a
/// disjoint attribute domain ("beta") that supplies real out-domain text
/// for entropy-regularized training and bag-of-words extraction.
struct SynthConfig {
  int sentences_per_domain = 2000;
  int classes = 3;
  int dim = 24;                 // word-vector dimension
  int class_words = 40;         // per-class vocabulary
  int shared_words = 60;        // shared IND vocabulary
  int attribute_words = 150;    // beta vocabulary
  int eval_words = 150;         // gamma vocabulary (includes the overlap)
  double eval_overlap = 0.2;    // fraction of gamma's vocabulary drawn from alpha's
  // token-level rate at which gamma sentences use their alpha-shared words;
  // higher values park the eval domain closer to the IND cluster and make
  // detection harder without changing the vocabulary overlap
  double eval_ind_token_rate = 0.5;
  // how strongly gamma's own words align with the IND shared direction
  // (1 = same direction, 0 = a fresh alien direction). High alignment makes
  // the eval domain detectable only through its incoherent class mixture,
  // the way overlapping text topics behave, rather than through a give-away
  // embedding offset
  double eval_dir_alignment = 0.85;
  double class_token_rate = 0.5;
  int min_len = 8;
  int max_len = 16;
  double vector_noise = 0.6;    // per-word spread around the pool direction
  std::uint64_t seed = 7;
  std::string out_dir;
};

struct SynthPaths {
  std::string ind_train;
  std::string ind_val;
  std::string ind_test;
  std::string ood_eval;
  std::string attribute;
  std::string word_vectors;
  std::string manifest;
};

/// Writes ind_{train,val,test}.jsonl (stratified 80/10/10), ood_eval.jsonl,
/// attribute.jsonl, vectors.txt, and a synth.json manifest under
/// config.out_dir. Byte-stable under the seed.
SynthPaths make_synthetic_corpus(const SynthConfig& config);

}  // namespace pnpood
