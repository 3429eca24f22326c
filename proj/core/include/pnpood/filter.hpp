#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnpood/embed.hpp"

namespace pnpood {

/// Shell width above the boundary radius: either an absolute distance T or
/// a multiple of the boundary radius (T = value * d).
enum class ShellMode { kAbsolute, kRelative };

struct ShellSpec {
  ShellMode mode = ShellMode::kAbsolute;
  double value = 10.0;
};

struct ClusterSummary {
  std::vector<double> center;      // mean of the IND embeddings
  double boundary_radius = 0.0;    // 95th-percentile distance to the center
  double shell_width = 0.0;        // resolved T
  ShellMode mode = ShellMode::kAbsolute;
  double percentile_q = 0.95;
};

/// Coordinate-wise arithmetic mean. Errors on empty input.
std::vector<double> cluster_center(std::span<const SentenceEmbedding> embeddings);

/// Linear interpolation between closest ranks: h = q*(n-1) over the sorted
/// values, result = v[floor h] + frac(h) * (v[floor h + 1] - v[floor h]).
double percentile(std::vector<double> values, double q);

struct FilterResult {
  std::vector<int> kept_indices;  // candidate order preserved
  ClusterSummary summary;
};

/// Keeps candidate i iff its Euclidean distance to the IND center lies
/// strictly inside (d, d+T), where d is the q-th percentile of IND
/// distances. Center and d come from the IND embeddings only.
FilterResult filter_candidates(std::span<const SentenceEmbedding> candidate_embeddings,
                               std::span<const SentenceEmbedding> ind_embeddings,
                               ShellSpec shell, double q = 0.95);

/// {n_ind, n_candidates, center_norm, d, T, mode, kept_indices}
nlohmann::json filter_report(const FilterResult& result, int n_ind, int n_candidates);

void save_filter_report(const nlohmann::json& report, const std::string& path);

}  // namespace pnpood
