#include "pnpood/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pnpood/error.hpp"

namespace pnpood {

namespace {

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("line " + std::to_string(line_no) + ": unparsable number '" + s + "'");
  }
}

}  // namespace

WordVectors load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open word-vector file: " + path);
  WordVectors wv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vec;
    std::string field;
    while (ss >> field) vec.push_back(parse_double(field, line_no));
    if (vec.empty())
      throw ValidationError("line " + std::to_string(line_no) + ": token without vector values");
    if (wv.dim == 0) {
      wv.dim = static_cast<int>(vec.size());
    } else if (static_cast<int>(vec.size()) != wv.dim) {
      throw ValidationError("line " + std::to_string(line_no) + ": inconsistent dimension (got " +
                            std::to_string(vec.size()) + ", expected " + std::to_string(wv.dim) +
                            ")");
    }
    wv.table[token] = std::move(vec);
  }
  if (wv.table.empty()) throw ValidationError("no vectors in file: " + path);
  return wv;
}

void save_word_vectors(const WordVectors& wv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write word-vector file: " + path);
  // Sorted for byte-stable output.
  std::vector<std::string> tokens;
  tokens.reserve(wv.table.size());
  for (const auto& [tok, vec] : wv.table) tokens.push_back(tok);
  std::sort(tokens.begin(), tokens.end());
  char buf[64];
  for (const auto& tok : tokens) {
    out << tok;
    for (double v : wv.table.at(tok)) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

SentenceEmbedding embed_sentence(const std::vector<std::string>& tokens, const WordVectors& wv) {
  SentenceEmbedding emb;
  emb.vector.assign(wv.dim, 0.0);
  for (const auto& tok : tokens) {
    auto it = wv.table.find(tok);
    if (it == wv.table.end()) continue;
    for (int d = 0; d < wv.dim; ++d) emb.vector[d] += it->second[d];
    ++emb.known_token_count;
  }
  if (emb.known_token_count > 0)
    for (double& v : emb.vector) v /= emb.known_token_count;
  return emb;
}

std::vector<SentenceEmbedding> load_precomputed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty embedding file: " + path);
  std::istringstream header(line);
  long n = -1, dim = -1;
  header >> n >> dim;
  if (n < 0 || dim <= 0)
    throw ValidationError("line 1: expected header \"N dim\", got '" + line + "'");

  std::vector<SentenceEmbedding> out;
  out.reserve(n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SentenceEmbedding emb;
    emb.known_token_count = -1;  // unknown for externally computed rows
    std::string field;
    while (ss >> field) emb.vector.push_back(parse_double(field, line_no));
    if (static_cast<long>(emb.vector.size()) != dim)
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(dim) + " values, got " +
                            std::to_string(emb.vector.size()));
    out.push_back(std::move(emb));
  }
  if (static_cast<long>(out.size()) != n)
    throw ValidationError("embedding file declares " + std::to_string(n) + " rows but has " +
                          std::to_string(out.size()));
  return out;
}

std::vector<SentenceEmbedding> embed_dataset(const Dataset& dataset, const WordVectors& wv) {
  std::vector<SentenceEmbedding> out;
  out.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) out.push_back(embed_sentence(ex.tokens, wv));
  return out;
}

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("euclidean_distance: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace pnpood
