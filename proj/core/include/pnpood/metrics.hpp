#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace pnpood {

/// One detection decision. score is OOD-ness (1 - msp here), and OOD is the
/// positive class throughout.
struct ScoredSample {
  double score = 0.0;
  bool is_ood = false;
};

/// One calibration decision: the predicted-class confidence and whether the
/// prediction was right.
struct EceInput {
  double confidence = 0.0;
  bool correct = false;
};

inline constexpr int kDefaultEceBins = 15;

/// Rank-based Mann-Whitney estimator, ties at half credit:
/// (#{score_pos > score_neg} + 0.5 * #ties) / (P*N).
double auroc(std::span<const ScoredSample> samples);

/// Average precision with ties processed as a block (precision evaluated
/// after the whole equal-score block is admitted).
double aupr(std::span<const ScoredSample> samples);

/// FPR at the largest threshold t (samples flagged OOD iff score >= t)
/// whose TPR reaches target_tpr.
double fpr_at_tpr(std::span<const ScoredSample> samples, double target_tpr = 0.90);

/// Expected calibration error over bins ((m-1)/M, m/M], right-closed:
/// sum_b (n_b/N) * |acc(b) - conf(b)| over non-empty bins.
double ece(std::span<const EceInput> inputs, int bins = kDefaultEceBins);

/// Identifies the one evaluation code path (score definition, estimator
/// choices, binning) stamped into every experiment report; the runners are
/// compared on this value to guarantee they share it.
inline constexpr const char* kEvalPathId =
    "pnpood-eval/1 score=1-msp auroc=rank-ties-half aupr=tie-block fpr=max-threshold-scan "
    "ece=right-closed-bins";

/// FNV-1a 64 of kEvalPathId, hex.
std::string eval_path_checksum();

/// {auroc, aupr, fpr_at_90, ece, n_ind, n_ood, score_definition, bins}
nlohmann::json metrics_report(std::span<const ScoredSample> samples,
                              std::span<const EceInput> ece_inputs, int bins, double target_tpr);

/// Score dump, columns `score,is_ood` (is_ood as 0/1).
void save_scores_csv(std::span<const ScoredSample> samples, const std::string& path);
std::vector<ScoredSample> load_scores_csv(const std::string& path);

}  // namespace pnpood
