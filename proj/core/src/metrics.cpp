#include "pnpood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pnpood/error.hpp"

namespace pnpood {

namespace {

struct Counts {
  long pos = 0;
  long neg = 0;
};

Counts count_classes(std::span<const ScoredSample> samples) {
  Counts c;
  for (const auto& s : samples) (s.is_ood ? c.pos : c.neg)++;
  return c;
}

}  // namespace

double auroc(std::span<const ScoredSample> samples) {
  Counts c = count_classes(samples);
  if (c.pos == 0 || c.neg == 0)
    throw ValidationError("auroc: need at least one OOD and one IND sample");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

  // average ranks across tie groups, then the rank-sum identity
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (samples[order[t]].is_ood) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(c.pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(c.neg));
}

double aupr(std::span<const ScoredSample> samples) {
  Counts c = count_classes(samples);
  if (c.pos == 0) throw ValidationError("aupr: need at least one OOD sample");

  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

  double ap = 0.0;
  long tp = 0, admitted = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    long block_pos = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      if (sorted[j].is_ood) ++block_pos;
      ++j;
    }
    tp += block_pos;
    admitted += static_cast<long>(j - i);
    const double precision = static_cast<double>(tp) / static_cast<double>(admitted);
    ap += precision * static_cast<double>(block_pos);
    i = j;
  }
  return ap / static_cast<double>(c.pos);
}

double fpr_at_tpr(std::span<const ScoredSample> samples, double target_tpr) {
  Counts c = count_classes(samples);
  if (c.pos == 0 || c.neg == 0)
    throw ValidationError("fpr_at_tpr: need at least one OOD and one IND sample");
  if (target_tpr <= 0.0 || target_tpr > 1.0)
    throw ValidationError("fpr_at_tpr: target_tpr must lie in (0,1]");

  std::vector<double> thresholds;
  thresholds.reserve(samples.size());
  for (const auto& s : samples) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // scan from the largest threshold down; the first one reaching the target
  // TPR is the largest such threshold
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (const auto& s : samples) {
      if (s.score >= t) (s.is_ood ? tp : fp)++;
    }
    if (static_cast<double>(tp) / static_cast<double>(c.pos) >= target_tpr)
      return static_cast<double>(fp) / static_cast<double>(c.neg);
  }
  return 1.0;  // unreachable: the smallest threshold admits everything
}

double ece(std::span<const EceInput> inputs, int bins) {
  if (inputs.empty()) throw ValidationError("ece: empty input");
  if (bins < 1) throw ValidationError("ece: bin count must be at least 1");

  std::vector<long> n_b(bins, 0);
  std::vector<long> correct_b(bins, 0);
  std::vector<double> conf_b(bins, 0.0);
  for (const auto& in : inputs) {
    if (!(in.confidence > 0.0) || in.confidence > 1.0)
      throw ValidationError("ece: confidence must lie in (0,1]");
    int b = static_cast<int>(std::ceil(in.confidence * bins)) - 1;
    b = std::clamp(b, 0, bins - 1);
    ++n_b[b];
    if (in.correct) ++correct_b[b];
    conf_b[b] += in.confidence;
  }
  double total = 0.0;
  const auto n = static_cast<double>(inputs.size());
  for (int b = 0; b < bins; ++b) {
    if (n_b[b] == 0) continue;
    const double acc = static_cast<double>(correct_b[b]) / static_cast<double>(n_b[b]);
    const double conf = conf_b[b] / static_cast<double>(n_b[b]);
    total += (static_cast<double>(n_b[b]) / n) * std::abs(acc - conf);
  }
  return total;
}

std::string eval_path_checksum() {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char* p = kEvalPathId; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json metrics_report(std::span<const ScoredSample> samples,
                              std::span<const EceInput> ece_inputs, int bins, double target_tpr) {
  Counts c = count_classes(samples);
  nlohmann::json j;
  j["auroc"] = auroc(samples);
  j["aupr"] = aupr(samples);
  j["fpr_at_90"] = fpr_at_tpr(samples, target_tpr);
  j["ece"] = ece_inputs.empty() ? nlohmann::json() : nlohmann::json(ece(ece_inputs, bins));
  j["n_ind"] = c.neg;
  j["n_ood"] = c.pos;
  j["score_definition"] = "1-msp";
  j["bins"] = bins;
  j["eval_path"] = kEvalPathId;
  j["eval_path_checksum"] = eval_path_checksum();
  return j;
}

void save_scores_csv(std::span<const ScoredSample> samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write scores: " + path);
  out << "score,is_ood\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    out << buf << ',' << (s.is_ood ? 1 : 0) << '\n';
  }
}

std::vector<ScoredSample> load_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scores: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty scores file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "score,is_ood")
    throw ValidationError("line 1: expected header 'score,is_ood', got '" + line + "'");
  std::vector<ScoredSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ValidationError("line " + std::to_string(line_no) + ": expected 'score,is_ood'");
    ScoredSample s;
    try {
      s.score = std::stod(line.substr(0, comma));
      s.is_ood = std::stoi(line.substr(comma + 1)) != 0;
    } catch (const std::exception&) {
      throw ValidationError("line " + std::to_string(line_no) + ": unparsable score row");
    }
    samples.push_back(s);
  }
  return samples;
}

}  // namespace pnpood
