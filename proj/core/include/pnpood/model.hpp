#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnpood/embed.hpp"

namespace pnpood {

/// Dense row-major matrix. Layers are small enough here that hand-rolled
/// loops beat pulling in a linear-algebra dependency.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Feed-forward softmax classifier: affine + rectifier hidden layers, then
/// an affine layer into k logits. weights[l] has shape (out x in).
struct ClassifierParams {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int k = 0;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
};

struct Prediction {
  std::vector<double> probs;
  std::vector<double> logits;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero,
/// deterministic under seed. k must be at least 2.
ClassifierParams init_params(int input_dim, const std::vector<int>& hidden_dims, int k,
                             std::uint64_t seed);

/// Numerically stable softmax (max-subtraction).
std::vector<double> softmax(const std::vector<double>& logits);

Prediction forward(const ClassifierParams& params, const std::vector<double>& embedding);

inline Prediction forward(const ClassifierParams& params, const SentenceEmbedding& embedding) {
  return forward(params, embedding.vector);
}

/// Maximum softmax probability, in [1/k, 1]. The OOD detection score used
/// elsewhere is 1 - msp.
double msp(const Prediction& prediction);

/// JSON checkpoint, format documented in the README:
/// {"format":"pnpood-checkpoint","version":1,"input_dim":..,"hidden_dims":[..],
///  "k":..,"layers":[{"rows":..,"cols":..,"weights":[row-major..],"bias":[..]}]}
void save_checkpoint(const ClassifierParams& params, const std::string& path);
ClassifierParams load_checkpoint(const std::string& path);

}  // namespace pnpood
