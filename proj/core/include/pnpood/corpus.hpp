#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace pnpood {

/// Sentinel class id carried by OOD examples. Never fed to cross-entropy.
inline constexpr int kOodLabel = -1;

enum class DatasetRole { kInd, kOodCandidate, kOodEval };
enum class DatasetSplit { kUnsplit, kTrain, kVal, kTest };
enum class FileFormat { kJsonl, kCsv };

struct LabeledExample {
  std::string raw_text;
  std::vector<std::string> tokens;
  int class_label = kOodLabel;
  std::string domain_tag;

  /// True when tokenization produced nothing usable.
  bool degenerate() const { return tokens.empty(); }
};

struct Dataset {
  std::vector<LabeledExample> examples;
  int k = 0;  // class count of the IND label space
  DatasetRole role = DatasetRole::kInd;
  DatasetSplit split = DatasetSplit::kUnsplit;

  std::size_t size() const { return examples.size(); }
};

/// Lowercases, splits on whitespace, and strips punctuation from token
/// edges (interior punctuation survives, so "apple.com" stays whole).
/// Deterministic; empty input yields an empty list.
std::vector<std::string> tokenize(const std::string& raw_text);

/// Joins tokens with single spaces. tokenize(join_tokens(tokenize(s))) ==
/// tokenize(s) for every s.
std::string join_tokens(const std::vector<std::string>& tokens);

/// Reads one LabeledExample per record, preserving file order.
/// JSONL records: {"text": string, "label": integer optional, "domain": string}.
/// CSV: header `text,label,domain`, RFC-4180 quoting, one record per line.
/// IND records must carry a label in [0, k); OOD roles must not carry one.
/// Throws ValidationError naming the offending line.
Dataset load_dataset(const std::string& path, FileFormat format, DatasetRole role, int k);

/// Writes a dataset back out as JSONL (text/label/domain records).
void save_dataset_jsonl(const Dataset& dataset, const std::string& path);

struct Vocabulary {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // inverse of token_to_id
  int min_count = 1;
  int unk_id = -1;

  int size() const { return static_cast<int>(id_to_token.size()); }
  /// unk_id for tokens that were below min_count or never seen.
  int id_of(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk_id : it->second;
  }
};

/// Ids are assigned in descending corpus frequency, ties broken
/// lexicographically; tokens below min_count are excluded. The unk token
/// takes the final id. Throws ValidationError on an empty dataset or when
/// nothing survives the frequency floor.
Vocabulary build_vocab(const Dataset& dataset, int min_count);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Deterministic seeded shuffle + exact disjoint partition. IND datasets are
/// stratified by class; OOD datasets are split as a whole. Throws
/// ValidationError when ratios are invalid or any split would be empty
/// ("split empty for some class" in the stratified case).
DatasetSplits split(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

/// Sorted unique domain tags present in the dataset.
std::vector<std::string> domain_tags(const Dataset& dataset);

}  // namespace pnpood
