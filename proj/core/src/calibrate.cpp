#include "pnpood/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "pnpood/error.hpp"

namespace pnpood {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> clamped_log(const std::vector<double>& probs) {
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = std::log(std::max(probs[i], kProbFloor));
  return out;
}

double mean_nll(const DirichletMap& map, std::span<const std::vector<double>> probs,
                std::span<const int> labels) {
  double nll = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::vector<double> q = pnpood::apply(map, probs[i]);
    nll -= std::log(std::max(q[labels[i]], kProbFloor));
  }
  return nll / static_cast<double>(probs.size());
}

}  // namespace

DirichletMap DirichletMap::identity(int k) {
  DirichletMap map;
  map.k = k;
  map.w = Matrix(k, k);
  for (int i = 0; i < k; ++i) map.w.at(i, i) = 1.0;
  map.b.assign(k, 0.0);
  return map;
}

std::vector<double> apply(const DirichletMap& map, const std::vector<double>& probs) {
  if (static_cast<int>(probs.size()) != map.k)
    throw ValidationError("calibrate: probability vector has length " +
                          std::to_string(probs.size()) + ", map expects " + std::to_string(map.k));
  std::vector<double> logp = clamped_log(probs);
  std::vector<double> z(map.k);
  for (int i = 0; i < map.k; ++i) {
    double acc = map.b[i];
    for (int j = 0; j < map.k; ++j) acc += map.w.at(i, j) * logp[j];
    z[i] = acc;
  }
  return softmax(z);
}

double odir(const Matrix& w) {
  if (w.rows != w.cols || w.rows < 2)
    throw ValidationError("odir: W must be square with k >= 2");
  const int k = w.rows;
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) sum += w.at(i, j) * w.at(i, j);
  return sum / (static_cast<double>(k) * (k - 1));
}

CalibrationFit fit_dirichlet(std::span<const std::vector<double>> val_probs,
                             std::span<const int> val_labels, const CalibrationConfig& config) {
  if (val_probs.empty()) throw ValidationError("fit_dirichlet: empty validation set");
  if (val_probs.size() != val_labels.size())
    throw ValidationError("fit_dirichlet: probs/labels size mismatch");
  const int k = static_cast<int>(val_probs.front().size());
  if (k < 2) throw ValidationError("fit_dirichlet: k must be at least 2");
  for (std::size_t i = 0; i < val_probs.size(); ++i) {
    if (static_cast<int>(val_probs[i].size()) != k)
      throw ValidationError("fit_dirichlet: inconsistent probability vector length");
    if (val_labels[i] < 0 || val_labels[i] >= k)
      throw ValidationError("fit_dirichlet: label out of range");
  }

  // cache the log-probability inputs; they never change during the fit
  std::vector<std::vector<double>> logp(val_probs.size());
  for (std::size_t i = 0; i < val_probs.size(); ++i) logp[i] = clamped_log(val_probs[i]);
  const double n = static_cast<double>(val_probs.size());
  const double odir_norm = static_cast<double>(k) * (k - 1);

  DirichletMap map = DirichletMap::identity(k);
  CalibrationFit fit;
  fit.lambda = config.lambda;
  fit.identity_nll = mean_nll(map, val_probs, val_labels);
  fit.map = map;
  fit.val_nll = fit.identity_nll;

  // Adam on (W, b), full batch
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Matrix mw(k, k), vw(k, k);
  std::vector<double> mb(k, 0.0), vb(k, 0.0);

  for (int it = 1; it <= config.iterations; ++it) {
    Matrix gw(k, k);
    std::vector<double> gb(k, 0.0);
    double nll = 0.0;
    for (std::size_t s = 0; s < val_probs.size(); ++s) {
      std::vector<double> z(k);
      for (int i = 0; i < k; ++i) {
        double acc = map.b[i];
        for (int j = 0; j < k; ++j) acc += map.w.at(i, j) * logp[s][j];
        z[i] = acc;
      }
      std::vector<double> q = softmax(z);
      nll -= std::log(std::max(q[val_labels[s]], kProbFloor));
      // d(nll)/dz = q - onehot(label), averaged over the batch
      for (int i = 0; i < k; ++i) {
        double dz = (q[i] - (i == val_labels[s] ? 1.0 : 0.0)) / n;
        gb[i] += dz;
        for (int j = 0; j < k; ++j) gw.at(i, j) += dz * logp[s][j];
      }
    }
    nll /= n;
    if (!std::isfinite(nll))
      throw std::runtime_error("fit_dirichlet: non-finite objective at iteration " +
                               std::to_string(it));
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) gw.at(i, j) += config.lambda * 2.0 * map.w.at(i, j) / odir_norm;

    const double c1 = 1.0 - std::pow(b1, static_cast<double>(it));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(it));
    auto update = [&](double& theta, double g, double& m, double& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g * g;
      theta -= config.learning_rate * (m / c1) / (std::sqrt(v / c2) + eps);
    };
    for (std::size_t i = 0; i < map.w.data.size(); ++i)
      update(map.w.data[i], gw.data[i], mw.data[i], vw.data[i]);
    for (int i = 0; i < k; ++i) update(map.b[i], gb[i], mb[i], vb[i]);

    const double candidate_nll = mean_nll(map, val_probs, val_labels);
    if (candidate_nll < fit.val_nll) {
      fit.val_nll = candidate_nll;
      fit.map = map;
    }
  }
  return fit;
}

CalibrationFit fit_dirichlet_auto(std::span<const std::vector<double>> val_probs,
                                  std::span<const int> val_labels, CalibrationConfig config) {
  CalibrationFit best;
  bool first = true;
  for (double lambda : kLambdaGrid) {
    config.lambda = lambda;
    CalibrationFit fit = fit_dirichlet(val_probs, val_labels, config);
    if (first || fit.val_nll < best.val_nll) {
      best = fit;
      first = false;
    }
  }
  return best;
}

void save_calibration(const CalibrationFit& fit, const std::string& path) {
  nlohmann::json j;
  j["k"] = fit.map.k;
  j["W"] = fit.map.w.data;
  j["b"] = fit.map.b;
  j["lambda"] = fit.lambda;
  j["val_nll"] = fit.val_nll;
  j["identity_nll"] = fit.identity_nll;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write calibration map: " + path);
  out << j.dump(2) << '\n';
}

DirichletMap load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open calibration map: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed calibration map " + path + ": " + e.what());
  }
  DirichletMap map;
  map.k = j.at("k").get<int>();
  map.w = Matrix(map.k, map.k);
  map.w.data = j.at("W").get<std::vector<double>>();
  if (map.w.data.size() != static_cast<std::size_t>(map.k) * map.k)
    throw ValidationError("calibration map W has wrong size in " + path);
  map.b = j.at("b").get<std::vector<double>>();
  if (map.b.size() != static_cast<std::size_t>(map.k))
    throw ValidationError("calibration map b has wrong size in " + path);
  return map;
}

}  // namespace pnpood
