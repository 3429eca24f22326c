#pragma once

#include <span>
#include <string>
#include <vector>

#include "pnpood/model.hpp"

namespace pnpood {

/// Post-hoc calibration map on log-probabilities:
/// calibrated = softmax(W * ln(p) + b).
struct DirichletMap {
  int k = 0;
  Matrix w;                // k x k
  std::vector<double> b;   // length k

  static DirichletMap identity(int k);
};

/// Applies the map. Probabilities are clamped at 1e-12 before the log.
std::vector<double> apply(const DirichletMap& map, const std::vector<double>& probs);

/// Off-diagonal regularizer: mean of squared off-diagonal entries,
/// sum_{i != j} w_ij^2 / (k*(k-1)). Requires k >= 2.
double odir(const Matrix& w);

struct CalibrationConfig {
  double lambda = 0.01;       // weight on the off-diagonal regularizer
  double learning_rate = 0.01;
  int iterations = 500;       // full-batch steps
};

struct CalibrationFit {
  DirichletMap map;
  double val_nll = 0.0;       // NLL of the returned map on the fit set
  double identity_nll = 0.0;  // NLL of the identity map (the starting point)
  double lambda = 0.0;        // regularizer weight that produced the map
};

/// Minimizes mean NLL of the calibrated probabilities + lambda * odir(W)
/// with Adam, starting from the identity map, keeping the iterate with the
/// best NLL. The result therefore never has worse NLL than identity.
CalibrationFit fit_dirichlet(std::span<const std::vector<double>> val_probs,
                             std::span<const int> val_labels, const CalibrationConfig& config);

inline constexpr double kLambdaGrid[] = {0.0, 1e-3, 1e-2, 1e-1};

/// Runs the lambda grid and keeps the fit with the best NLL.
CalibrationFit fit_dirichlet_auto(std::span<const std::vector<double>> val_probs,
                                  std::span<const int> val_labels, CalibrationConfig config);

/// Map file: JSON {k, W row-major, b, lambda, val_nll}.
void save_calibration(const CalibrationFit& fit, const std::string& path);
DirichletMap load_calibration(const std::string& path);

}  // namespace pnpood
