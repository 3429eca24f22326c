#include "pnpood/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pnpood/error.hpp"
#include "pnpood/rng.hpp"

namespace pnpood {

std::vector<std::string> tokenize(const std::string& raw_text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = raw_text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(raw_text[i]))) ++i;
    std::size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(raw_text[i]))) ++i;
    if (i == start) continue;
    std::size_t lo = start, hi = i;  // [lo, hi)
    while (lo < hi && std::ispunct(static_cast<unsigned char>(raw_text[lo]))) ++lo;
    while (hi > lo && std::ispunct(static_cast<unsigned char>(raw_text[hi - 1]))) --hi;
    if (lo == hi) continue;  // token was all punctuation
    std::string tok;
    tok.reserve(hi - lo);
    for (std::size_t j = lo; j < hi; ++j)
      tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw_text[j]))));
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

namespace {

// Splits one CSV line into fields. Double quotes wrap fields that contain
// commas; "" inside a quoted field is a literal quote. Embedded newlines are
// not supported (records are line-oriented so errors can name line numbers).
std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty())
        throw ValidationError("line " + std::to_string(line_no) + ": stray quote in CSV field");
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
    ++i;
  }
  if (quoted)
    throw ValidationError("line " + std::to_string(line_no) + ": unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

LabeledExample make_example(std::string text, const std::string& label_str, bool has_label,
                            std::string domain, DatasetRole role, int k, std::size_t line_no) {
  LabeledExample ex;
  ex.raw_text = std::move(text);
  ex.tokens = tokenize(ex.raw_text);
  ex.domain_tag = std::move(domain);
  if (role == DatasetRole::kInd) {
    if (!has_label)
      throw ValidationError("line " + std::to_string(line_no) + ": IND record has no label");
    int label = 0;
    try {
      std::size_t pos = 0;
      label = std::stoi(label_str, &pos);
      if (pos != label_str.size()) throw std::invalid_argument(label_str);
    } catch (const std::exception&) {
      throw ValidationError("line " + std::to_string(line_no) + ": unparsable label '" +
                            label_str + "'");
    }
    if (label < 0 || label >= k)
      throw ValidationError("line " + std::to_string(line_no) + ": class id out of range (" +
                            std::to_string(label) + " with k=" + std::to_string(k) + ")");
    ex.class_label = label;
  } else {
    ex.class_label = kOodLabel;
  }
  return ex;
}

Dataset load_jsonl(std::istream& in, DatasetRole role, int k) {
  Dataset ds;
  ds.k = k;
  ds.role = role;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() +
                            ")");
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
      throw ValidationError("line " + std::to_string(line_no) + ": record lacks a \"text\" string");
    bool has_label = rec.contains("label") && !rec["label"].is_null();
    std::string label_str;
    if (has_label) {
      if (!rec["label"].is_number_integer())
        throw ValidationError("line " + std::to_string(line_no) + ": \"label\" is not an integer");
      label_str = std::to_string(rec["label"].get<long long>());
    }
    std::string domain = rec.value("domain", std::string{});
    ds.examples.push_back(make_example(rec["text"].get<std::string>(), label_str, has_label,
                                       std::move(domain), role, k, line_no));
  }
  return ds;
}

Dataset load_csv(std::istream& in, DatasetRole role, int k) {
  Dataset ds;
  ds.k = k;
  ds.role = role;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ValidationError("empty CSV file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "text,label,domain")
    throw ValidationError("line 1: expected CSV header 'text,label,domain', got '" + line + "'");
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = parse_csv_line(line, line_no);
    if (fields.size() != 3)
      throw ValidationError("line " + std::to_string(line_no) + ": expected 3 CSV fields, got " +
                            std::to_string(fields.size()));
    bool has_label = !fields[1].empty();
    ds.examples.push_back(make_example(std::move(fields[0]), fields[1], has_label,
                                       std::move(fields[2]), role, k, line_no));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const std::string& path, FileFormat format, DatasetRole role, int k) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file: " + path);
  return format == FileFormat::kJsonl ? load_jsonl(in, role, k) : load_csv(in, role, k);
}

void save_dataset_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset file: " + path);
  for (const auto& ex : dataset.examples) {
    nlohmann::json rec;
    rec["text"] = ex.raw_text;
    if (ex.class_label != kOodLabel) rec["label"] = ex.class_label;
    rec["domain"] = ex.domain_tag;
    out << rec.dump() << '\n';
  }
}

Vocabulary build_vocab(const Dataset& dataset, int min_count) {
  if (dataset.examples.empty()) throw ValidationError("build_vocab: empty dataset");
  std::unordered_map<std::string, long> counts;
  for (const auto& ex : dataset.examples)
    for (const auto& tok : ex.tokens) ++counts[tok];

  std::vector<std::pair<std::string, long>> kept;
  kept.reserve(counts.size());
  for (auto& [tok, c] : counts)
    if (c >= min_count) kept.emplace_back(tok, c);
  if (kept.empty()) throw ValidationError("build_vocab: empty vocabulary (min_count too high)");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.min_count = min_count;
  vocab.id_to_token.reserve(kept.size() + 1);
  for (const auto& [tok, c] : kept) {
    vocab.token_to_id.emplace(tok, static_cast<int>(vocab.id_to_token.size()));
    vocab.id_to_token.push_back(tok);
  }
  vocab.unk_id = static_cast<int>(vocab.id_to_token.size());
  vocab.token_to_id.emplace("<unk>", vocab.unk_id);
  vocab.id_to_token.push_back("<unk>");
  return vocab;
}

namespace {

// Exact partition of n into three parts via rounded cumulative boundaries.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& r) {
  double c1 = r.train;
  double c2 = r.train + r.val;
  auto b1 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * c1));
  auto b2 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * c2));
  b1 = std::min(b1, n);
  b2 = std::min(std::max(b2, b1), n);
  return {b1, b2 - b1, n - b2};
}

}  // namespace

DatasetSplits split(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
    throw ValidationError("split: ratios must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ValidationError("split: ratios must sum to 1");
  if (dataset.examples.empty()) throw ValidationError("split: empty dataset");

  const bool stratified = dataset.role == DatasetRole::kInd;
  Rng rng(seed);

  // Group indices per stratum (one stratum per class, or a single stratum
  // for unlabeled data), shuffle each, then cut by rounded boundaries.
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    int key = stratified ? dataset.examples[i].class_label : 0;
    strata[key].push_back(i);
  }

  std::array<std::vector<std::size_t>, 3> parts;
  for (auto& [cls, indices] : strata) {
    rng.shuffle(indices);
    auto sizes = apportion(indices.size(), ratios);
    if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
      if (stratified)
        throw ValidationError("split: split empty for some class (class " + std::to_string(cls) +
                              " has only " + std::to_string(indices.size()) + " examples)");
      throw ValidationError("split: a split would be empty");
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t j = 0; j < sizes[s]; ++j) parts[s].push_back(indices[pos++]);
  }

  auto build = [&](const std::vector<std::size_t>& idx, DatasetSplit tag) {
    Dataset out;
    out.k = dataset.k;
    out.role = dataset.role;
    out.split = tag;
    out.examples.reserve(idx.size());
    for (std::size_t i : idx) out.examples.push_back(dataset.examples[i]);
    return out;
  };
  return {build(parts[0], DatasetSplit::kTrain), build(parts[1], DatasetSplit::kVal),
          build(parts[2], DatasetSplit::kTest)};
}

std::vector<std::string> domain_tags(const Dataset& dataset) {
  std::set<std::string> tags;
  for (const auto& ex : dataset.examples) tags.insert(ex.domain_tag);
  return {tags.begin(), tags.end()};
}

}  // namespace pnpood
