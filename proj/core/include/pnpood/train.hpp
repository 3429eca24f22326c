#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pnpood/model.hpp"
#include "pnpood/rng.hpp"

namespace pnpood {

struct TrainConfig {
  double alpha = 1.0;           // weight on the entropy regularizer
  double learning_rate = 0.001;
  int batch_size = 32;
  double dropout_rate = 0.3;    // hidden activations only, inverted scaling
  int epochs = 10;
  std::uint64_t seed = 0;
  double ood_ratio = 0.5;       // fraction of each step's batch drawn from OOD
  std::vector<int> hidden_dims = {128, 128};
};

/// total = ce_term + alpha * entropy_term, exactly.
struct LossBreakdown {
  double ce_term = 0.0;
  double entropy_term = 0.0;
  double total = 0.0;
};

struct IndExample {
  std::vector<double> input;
  int label = 0;
};

/// -log p[label], evaluated from the logits in log-sum-exp form.
double cross_entropy(const Prediction& prediction, int class_label);

/// KL(U || p) = -ln k - (1/k) sum_i ln p_i. Zero iff p is uniform. Also
/// evaluated from the logits, so p_i == 0 cannot occur.
double entropy_reg(const Prediction& prediction, int k);

/// Per-example multiplier on each hidden unit: 0 when dropped, 1/(1-rate)
/// when kept. Indexed [example][hidden layer][unit]; examples are the IND
/// batch followed by the OOD batch. An empty mask disables dropout.
struct DropoutMask {
  std::vector<std::vector<std::vector<double>>> scale;

  bool empty() const { return scale.empty(); }
  static DropoutMask sample(Rng& rng, double rate, int n_examples,
                            const std::vector<int>& hidden_dims);
};

/// Mean cross-entropy over the IND batch plus alpha times the mean entropy
/// regularizer over the OOD batch (zero when the OOD batch is empty).
LossBreakdown batch_loss(const ClassifierParams& params, std::span<const IndExample> ind_batch,
                         std::span<const std::vector<double>> ood_batch, double alpha,
                         const DropoutMask* mask = nullptr);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

/// Exact analytic gradients of batch_loss under the given fixed dropout
/// mask (or with dropout disabled when mask is null).
Gradients gradients(const ClassifierParams& params, std::span<const IndExample> ind_batch,
                    std::span<const std::vector<double>> ood_batch, double alpha,
                    const DropoutMask* mask = nullptr);

struct EpochLog {
  int epoch = 0;
  double ce = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double val_acc = 0.0;
};

struct TrainData {
  std::vector<IndExample> ind_train;
  std::vector<IndExample> ind_val;
  std::vector<std::vector<double>> ood_train;  // may be empty (pure MSP baseline)
  int k = 0;
  int input_dim = 0;
};

struct TrainResult {
  ClassifierParams params;  // checkpoint with the best validation accuracy
  std::vector<EpochLog> log;
  double best_val_acc = 0.0;
  int best_epoch = 0;
};

/// Adam (0.9/0.999, eps 1e-8) on the combined objective. Deterministic
/// under config.seed; with alpha == 0 the trajectory is bitwise independent
/// of the OOD data. Throws std::runtime_error naming the epoch if the loss
/// stops being finite.
TrainResult train(const TrainData& data, const TrainConfig& config);

/// Fraction of examples whose argmax prediction matches the label.
double accuracy(const ClassifierParams& params, std::span<const IndExample> examples);

/// Epoch log as JSON lines {epoch, ce, entropy, total, val_acc}.
void save_epoch_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace pnpood
