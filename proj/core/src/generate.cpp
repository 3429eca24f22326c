#include "pnpood/generate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "pnpood/error.hpp"

namespace pnpood {

namespace {

constexpr int kBosId = -2;  // never generated, only appears in context keys

int intern(NGramModel& model, const std::string& token) {
  auto [it, inserted] = model.ids.try_emplace(token, model.vocab_size());
  if (inserted) model.tokens.push_back(token);
  return it->second;
}

}  // namespace

NGramModel fit_ngram(const std::vector<std::vector<std::string>>& corpus, int n, double delta) {
  if (n < 2) throw ValidationError("fit_ngram: order must be at least 2");
  if (delta <= 0) throw ValidationError("fit_ngram: smoothing constant must be positive");
  if (corpus.empty()) throw ValidationError("fit_ngram: empty corpus");

  NGramModel model;
  model.n = n;
  model.delta = delta;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) intern(model, tok);

  for (const auto& sentence : corpus) {
    std::vector<int> context(n - 1, kBosId);
    auto record = [&](int next) {
      ++model.context_counts[context][next];
      ++model.next_counts[next];
      ++model.total_events;
      context.erase(context.begin());
      context.push_back(next);
    };
    for (const auto& tok : sentence) record(model.ids.at(tok));
    record(model.eos_id());
  }
  return model;
}

std::vector<double> next_token_dist(const NGramModel& model,
                                    const std::vector<std::string>& context) {
  const int ctx_len = model.n - 1;
  std::vector<int> key(ctx_len, kBosId);
  // use the trailing n-1 tokens, left-padded with begin markers
  int have = std::min<int>(ctx_len, static_cast<int>(context.size()));
  for (int i = 0; i < have; ++i) {
    const std::string& tok = context[context.size() - have + i];
    key[ctx_len - have + i] = model.token_id(tok);
  }

  const int support = model.vocab_size() + 1;  // vocabulary + EOS
  std::vector<double> dist(support, 0.0);
  auto it = model.context_counts.find(key);
  if (it != model.context_counts.end()) {
    long total = 0;
    for (const auto& [tok, count] : it->second) total += count;
    const double denom = static_cast<double>(total) + model.delta * support;
    for (int w = 0; w < support; ++w) {
      auto cit = it->second.find(w);
      long c = cit == it->second.end() ? 0 : cit->second;
      dist[w] = (static_cast<double>(c) + model.delta) / denom;
    }
  } else {
    // unigram backoff with the same smoothing
    const double denom = static_cast<double>(model.total_events) + model.delta * support;
    for (int w = 0; w < support; ++w) {
      auto cit = model.next_counts.find(w);
      long c = cit == model.next_counts.end() ? 0 : cit->second;
      dist[w] = (static_cast<double>(c) + model.delta) / denom;
    }
  }
  return dist;
}

BagOfWords extract_bow(const std::vector<std::vector<std::string>>& attribute_corpus,
                       const std::vector<std::vector<std::string>>& ind_corpus, int top_k) {
  if (attribute_corpus.empty() || ind_corpus.empty())
    throw ValidationError("extract_bow: both corpora must be non-empty");
  if (top_k < 1) throw ValidationError("extract_bow: top_k must be at least 1");

  constexpr double kEps = 1e-6;
  constexpr long kMinAttrCount = 3;

  std::map<std::string, long> attr_counts, ind_counts;
  long attr_total = 0, ind_total = 0;
  for (const auto& s : attribute_corpus)
    for (const auto& t : s) {
      ++attr_counts[t];
      ++attr_total;
    }
  for (const auto& s : ind_corpus)
    for (const auto& t : s) {
      ++ind_counts[t];
      ++ind_total;
    }
  if (attr_total == 0 || ind_total == 0)
    throw ValidationError("extract_bow: both corpora must contain tokens");

  std::vector<std::pair<std::string, double>> scored;
  for (const auto& [tok, count] : attr_counts) {
    if (count < kMinAttrCount) continue;
    double freq_attr = static_cast<double>(count) / attr_total;
    auto it = ind_counts.find(tok);
    double freq_ind = it == ind_counts.end() ? 0.0 : static_cast<double>(it->second) / ind_total;
    scored.emplace_back(tok, (freq_attr + kEps) / (freq_ind + kEps));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  if (static_cast<int>(scored.size()) < top_k)
    std::cerr << "extract_bow: only " << scored.size() << " tokens qualify (requested " << top_k
              << ")\n";

  BagOfWords bow;
  for (int i = 0; i < std::min<int>(top_k, static_cast<int>(scored.size())); ++i)
    bow.words.emplace(scored[i].first, scored[i].second);
  return bow;
}

std::vector<double> steer(const std::vector<double>& dist, const std::vector<int>& bow_indices,
                          double boost) {
  if (boost < 1.0) throw ValidationError("steer: boost must be at least 1");
  if (boost == 1.0) return dist;

  bool touched = false;
  for (int idx : bow_indices)
    if (idx >= 0 && idx < static_cast<int>(dist.size()) && dist[idx] > 0.0) touched = true;
  if (!touched) return dist;

  std::vector<double> out = dist;
  for (int idx : bow_indices)
    if (idx >= 0 && idx < static_cast<int>(out.size())) out[idx] *= boost;
  double sum = 0.0;
  for (double p : out) sum += p;
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> steer(const std::vector<double>& dist, const NGramModel& model,
                          const BagOfWords& bow, double boost) {
  std::vector<int> indices;
  indices.reserve(bow.words.size());
  for (const auto& [word, weight] : bow.words) {
    int id = model.token_id(word);
    if (id >= 0) indices.push_back(id);
  }
  return steer(dist, indices, boost);
}

namespace {

int sample_index(const std::vector<double>& dist, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cum += dist[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(dist.size()) - 1;  // fp residue
}

}  // namespace

std::vector<std::string> generate_sentence(const NGramModel& model,
                                           const std::vector<std::string>& seed_tokens,
                                           const BagOfWords& bow, const GenerationConfig& config,
                                           Rng& rng) {
  if (static_cast<int>(seed_tokens.size()) != config.seed_token_count)
    throw ValidationError("generate_sentence: seed has " + std::to_string(seed_tokens.size()) +
                          " tokens, expected " + std::to_string(config.seed_token_count));
  if (config.max_length <= config.seed_token_count)
    throw ValidationError("generate_sentence: max_length must exceed the seed length");

  std::vector<int> bow_indices;
  for (const auto& [word, weight] : bow.words) {
    int id = model.token_id(word);
    if (id >= 0) bow_indices.push_back(id);
  }

  std::vector<std::string> tokens = seed_tokens;
  while (static_cast<int>(tokens.size()) < config.max_length) {
    std::vector<double> dist = next_token_dist(model, tokens);
    dist = steer(dist, bow_indices, config.boost);
    int next = sample_index(dist, rng);
    if (next == model.eos_id()) break;
    tokens.push_back(model.tokens[next]);
  }
  return tokens;
}

OodCandidates make_ood_candidates(const Dataset& ind_dataset, const NGramModel& model,
                                  const BagOfWords& bow, const GenerationConfig& config) {
  if (ind_dataset.examples.empty())
    throw ValidationError("make_ood_candidates: empty IND dataset");
  if (config.samples_per_seed < 1)
    throw ValidationError("make_ood_candidates: samples_per_seed must be at least 1");

  const int num_seeds = config.num_seeds > 0 ? config.num_seeds
                                             : static_cast<int>(ind_dataset.examples.size());
  OodCandidates out;
  out.dataset.k = ind_dataset.k;
  out.dataset.role = DatasetRole::kOodCandidate;

  long skipped = 0;
  for (int g = 0; g < num_seeds; ++g) {
    Rng seed_rng = Rng::stream(config.rng_seed ^ 0x5eedull, g);
    const auto source_id =
        static_cast<int>(seed_rng.below(ind_dataset.examples.size()));
    const auto& source = ind_dataset.examples[source_id];
    if (static_cast<int>(source.tokens.size()) < config.seed_token_count) {
      ++skipped;
      continue;
    }
    std::vector<std::string> seed(source.tokens.begin(),
                                  source.tokens.begin() + config.seed_token_count);
    for (int s = 0; s < config.samples_per_seed; ++s) {
      const std::uint64_t stream_id =
          static_cast<std::uint64_t>(g) * config.samples_per_seed + s;
      Rng rng = Rng::stream(config.rng_seed, stream_id);
      auto tokens = generate_sentence(model, seed, bow, config, rng);
      LabeledExample ex;
      ex.tokens = tokens;
      ex.raw_text = join_tokens(tokens);
      ex.class_label = kOodLabel;
      ex.domain_tag = "generated";
      out.dataset.examples.push_back(std::move(ex));
      out.provenance.push_back({source_id, stream_id});
    }
  }
  if (skipped > 0)
    std::cerr << "make_ood_candidates: skipped " << skipped
              << " seed sentences shorter than the seed length\n";
  return out;
}

void save_candidates(const OodCandidates& candidates, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write candidates: " + path);
  for (std::size_t i = 0; i < candidates.dataset.examples.size(); ++i) {
    nlohmann::json j;
    j["text"] = candidates.dataset.examples[i].raw_text;
    j["seed_source_id"] = candidates.provenance[i].seed_source_id;
    j["rng_stream"] = candidates.provenance[i].rng_stream;
    out << j.dump() << '\n';
  }
}

OodCandidates load_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open candidates: " + path);
  OodCandidates out;
  out.dataset.role = DatasetRole::kOodCandidate;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed candidate (" +
                            e.what() + ")");
    }
    LabeledExample ex;
    ex.raw_text = j.at("text").get<std::string>();
    ex.tokens = tokenize(ex.raw_text);
    ex.class_label = kOodLabel;
    ex.domain_tag = "generated";
    out.dataset.examples.push_back(std::move(ex));
    out.provenance.push_back(
        {j.value("seed_source_id", -1), j.value("rng_stream", std::uint64_t{0})});
  }
  return out;
}

BagOfWords load_bow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open bag-of-words file: " + path);
  BagOfWords bow;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string word;
    double weight = 1.0;
    ss >> word;
    if (word.empty())
      throw ValidationError("line " + std::to_string(line_no) + ": empty bag-of-words entry");
    if (!(ss >> weight)) weight = 1.0;
    if (weight <= 0)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": bag-of-words weight must be positive");
    bow.words[word] = weight;
  }
  if (bow.words.empty()) throw ValidationError("bag-of-words file is empty: " + path);
  return bow;
}

void save_bow(const BagOfWords& bow, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write bag-of-words file: " + path);
  char buf[64];
  for (const auto& [word, weight] : bow.words) {
    std::snprintf(buf, sizeof(buf), "%.9g", weight);
    out << word << ' ' << buf << '\n';
  }
}

}  // namespace pnpood
