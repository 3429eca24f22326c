// Independent reference implementations used only by tests. Everything here
// recomputes results by brute force (pair enumeration, threshold sweeps,
// finite differences) so the library implementations are checked against a
// second route, not against themselves.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "pnpood/metrics.hpp"
#include "pnpood/model.hpp"
#include "pnpood/train.hpp"

namespace oracles {

// AUROC as the plain Mann-Whitney pair count.
inline double auroc_pairwise(const std::vector<pnpood::ScoredSample>& samples) {
  double wins = 0.0;
  long pos = 0, neg = 0;
  for (const auto& p : samples) {
    if (!p.is_ood) continue;
    ++pos;
    for (const auto& n : samples) {
      if (n.is_ood) continue;
      if (p.score > n.score) wins += 1.0;
      else if (p.score == n.score) wins += 0.5;
    }
  }
  for (const auto& n : samples)
    if (!n.is_ood) ++neg;
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

// AUROC as trapezoidal area under the empirical ROC over all distinct
// thresholds (flag iff score >= t), plus the (0,0) and (1,1) endpoints.
inline double auroc_trapezoid(const std::vector<pnpood::ScoredSample>& samples) {
  long pos = 0, neg = 0;
  for (const auto& s : samples) (s.is_ood ? pos : neg)++;
  std::set<double, std::greater<>> thresholds;
  for (const auto& s : samples) thresholds.insert(s.score);

  std::vector<std::pair<double, double>> curve;  // (fpr, tpr)
  curve.emplace_back(0.0, 0.0);
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (const auto& s : samples)
      if (s.score >= t) (s.is_ood ? tp : fp)++;
    curve.emplace_back(static_cast<double>(fp) / neg, static_cast<double>(tp) / pos);
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].first - curve[i - 1].first) * 0.5 *
            (curve[i].second + curve[i - 1].second);
  return area;
}

// Average precision as the all-thresholds precision-recall sweep:
// sum over distinct thresholds of (recall step) * precision at that cut.
inline double aupr_sweep(const std::vector<pnpood::ScoredSample>& samples) {
  long pos = 0;
  for (const auto& s : samples)
    if (s.is_ood) ++pos;
  std::set<double, std::greater<>> thresholds;
  for (const auto& s : samples) thresholds.insert(s.score);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    long tp = 0, flagged = 0;
    for (const auto& s : samples) {
      if (s.score >= t) {
        ++flagged;
        if (s.is_ood) ++tp;
      }
    }
    double recall = static_cast<double>(tp) / pos;
    double precision = static_cast<double>(tp) / flagged;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// FPR at the target TPR by exhaustive scan over every distinct threshold.
inline double fpr_at_tpr_scan(const std::vector<pnpood::ScoredSample>& samples,
                              double target_tpr) {
  long pos = 0, neg = 0;
  for (const auto& s : samples) (s.is_ood ? pos : neg)++;
  std::set<double, std::greater<>> thresholds;
  for (const auto& s : samples) thresholds.insert(s.score);
  for (double t : thresholds) {
    long tp = 0, fp = 0;
    for (const auto& s : samples)
      if (s.score >= t) (s.is_ood ? tp : fp)++;
    if (static_cast<double>(tp) / pos >= target_tpr)
      return static_cast<double>(fp) / neg;
  }
  return 1.0;
}

// Central finite differences of batch_loss over every parameter.
// Returns the maximum relative error against the analytic gradients.
// Callers should perturb the network's biases away from zero first: a
// fully dropped/dead hidden layer parks the next layer's pre-activations
// exactly on the rectifier kink (pre = bias), where finite differences
// measure a one-sided slope the subgradient legitimately reports as zero.
inline double gradient_check(const pnpood::ClassifierParams& params,
                             std::span<const pnpood::IndExample> ind,
                             std::span<const std::vector<double>> ood, double alpha,
                             const pnpood::DropoutMask* mask, double step = 1e-5) {
  pnpood::Gradients analytic = pnpood::gradients(params, ind, ood, alpha, mask);
  pnpood::ClassifierParams probe = params;
  double max_rel_err = 0.0;

  auto check_one = [&](double& theta, double analytic_g) {
    const double saved = theta;
    theta = saved + step;
    double up = pnpood::batch_loss(probe, ind, ood, alpha, mask).total;
    theta = saved - step;
    double down = pnpood::batch_loss(probe, ind, ood, alpha, mask).total;
    theta = saved;
    const double numeric = (up - down) / (2.0 * step);
    // floor keeps finite-difference cancellation noise from dominating
    // near-zero gradients
    const double scale = std::max({std::abs(numeric), std::abs(analytic_g), 1e-6});
    max_rel_err = std::max(max_rel_err, std::abs(numeric - analytic_g) / scale);
  };

  for (int l = 0; l < probe.layer_count(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].data.size(); ++i)
      check_one(probe.weights[l].data[i], analytic.weights[l].data[i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i)
      check_one(probe.biases[l][i], analytic.biases[l][i]);
  }
  return max_rel_err;
}

// Moves biases off zero so no pre-activation sits exactly on a rectifier
// kink during the finite-difference sweep.
inline void jitter_biases(pnpood::ClassifierParams& params, pnpood::Rng& rng,
                          double scale = 0.2) {
  for (auto& layer : params.biases)
    for (double& b : layer) b += rng.uniform(0.05, scale) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
}

}  // namespace oracles
