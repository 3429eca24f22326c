#include "pnpood/filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pnpood/error.hpp"

namespace pnpood {

std::vector<double> cluster_center(std::span<const SentenceEmbedding> embeddings) {
  if (embeddings.empty()) throw ValidationError("cluster_center: no embeddings");
  const std::size_t dim = embeddings.front().vector.size();
  std::vector<double> center(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) throw ValidationError("cluster_center: dimension mismatch");
    for (std::size_t d = 0; d < dim; ++d) center[d] += e.vector[d];
  }
  for (double& v : center) v /= static_cast<double>(embeddings.size());
  return center;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile: empty input");
  if (q < 0.0 || q > 1.0) throw ValidationError("percentile: q must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

FilterResult filter_candidates(std::span<const SentenceEmbedding> candidate_embeddings,
                               std::span<const SentenceEmbedding> ind_embeddings,
                               ShellSpec shell, double q) {
  if (candidate_embeddings.empty())
    throw ValidationError("filter_candidates: no candidate embeddings");
  if (ind_embeddings.empty()) throw ValidationError("filter_candidates: no IND embeddings");
  if (shell.value <= 0) throw ValidationError("filter_candidates: shell width must be positive");

  FilterResult result;
  result.summary.center = cluster_center(ind_embeddings);
  result.summary.percentile_q = q;
  result.summary.mode = shell.mode;

  std::vector<double> distances;
  distances.reserve(ind_embeddings.size());
  for (const auto& e : ind_embeddings)
    distances.push_back(euclidean_distance(result.summary.center, e.vector));
  result.summary.boundary_radius = percentile(std::move(distances), q);

  const double d = result.summary.boundary_radius;
  result.summary.shell_width =
      shell.mode == ShellMode::kAbsolute ? shell.value : shell.value * d;
  const double upper = d + result.summary.shell_width;

  for (std::size_t i = 0; i < candidate_embeddings.size(); ++i) {
    double dist = euclidean_distance(result.summary.center, candidate_embeddings[i].vector);
    if (dist > d && dist < upper) result.kept_indices.push_back(static_cast<int>(i));
  }
  return result;
}

nlohmann::json filter_report(const FilterResult& result, int n_ind, int n_candidates) {
  double center_norm = 0.0;
  for (double v : result.summary.center) center_norm += v * v;
  nlohmann::json j;
  j["n_ind"] = n_ind;
  j["n_candidates"] = n_candidates;
  j["center_norm"] = std::sqrt(center_norm);
  j["d"] = result.summary.boundary_radius;
  j["T"] = result.summary.shell_width;
  j["mode"] = result.summary.mode == ShellMode::kAbsolute ? "absolute" : "relative";
  j["percentile_q"] = result.summary.percentile_q;
  j["kept_indices"] = result.kept_indices;
  return j;
}

void save_filter_report(const nlohmann::json& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write filter report: " + path);
  out << report.dump(2) << '\n';
}

}  // namespace pnpood
