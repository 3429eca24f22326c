#include "pnpood/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "pnpood/error.hpp"

namespace pnpood {

namespace {

double log_sum_exp(const std::vector<double>& logits) {
  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_logit);
  return max_logit + std::log(sum);
}

}  // namespace

double cross_entropy(const Prediction& prediction, int class_label) {
  const int k = static_cast<int>(prediction.logits.size());
  if (class_label < 0 || class_label >= k)
    throw ValidationError("cross_entropy: label " + std::to_string(class_label) +
                          " outside [0," + std::to_string(k) + ")");
  return log_sum_exp(prediction.logits) - prediction.logits[class_label];
}

double entropy_reg(const Prediction& prediction, int k) {
  // KL(U||p) = -ln k - (1/k) sum ln p_i = -ln k + lse(z) - mean(z)
  const auto& z = prediction.logits;
  double mean = std::accumulate(z.begin(), z.end(), 0.0) / k;
  double kl = -std::log(static_cast<double>(k)) + log_sum_exp(z) - mean;
  return std::max(kl, 0.0);  // clip the ~1e-17 negatives near the optimum
}

DropoutMask DropoutMask::sample(Rng& rng, double rate, int n_examples,
                                const std::vector<int>& hidden_dims) {
  DropoutMask mask;
  if (rate <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  mask.scale.resize(n_examples);
  for (auto& per_layer : mask.scale) {
    per_layer.resize(hidden_dims.size());
    for (std::size_t l = 0; l < hidden_dims.size(); ++l) {
      per_layer[l].resize(hidden_dims[l]);
      for (double& s : per_layer[l]) s = rng.uniform() < rate ? 0.0 : keep_scale;
    }
  }
  return mask;
}

namespace {

// Per-example forward pass keeping every intermediate needed by backprop.
// h[0] is the input; h[l+1] the (masked) activation after hidden layer l;
// pre[l] the pre-activation of layer l. The final pre-activation is the
// logit vector.
struct Trace {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> pre;
};

Trace forward_traced(const ClassifierParams& params, const std::vector<double>& input,
                     const std::vector<std::vector<double>>* unit_scale) {
  if (static_cast<int>(input.size()) != params.input_dim)
    throw ValidationError("batch example dimension " + std::to_string(input.size()) +
                          " does not match input_dim " + std::to_string(params.input_dim));
  Trace t;
  t.h.push_back(input);
  const int layers = params.layer_count();
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = params.weights[l];
    const auto& b = params.biases[l];
    std::vector<double> a(w.rows);
    const auto& prev = t.h.back();
    for (int r = 0; r < w.rows; ++r) {
      double acc = b[r];
      const double* row = &w.data[static_cast<std::size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) acc += row[c] * prev[c];
      a[r] = acc;
    }
    t.pre.push_back(a);
    if (l + 1 < layers) {
      for (double& v : a) v = std::max(v, 0.0);
      if (unit_scale)
        for (int r = 0; r < w.rows; ++r) a[r] *= (*unit_scale)[l][r];
      t.h.push_back(std::move(a));
    }
  }
  return t;
}

// dloss/dlogits for one example, already weighted for the batch mean.
// Cross-entropy against a one-hot target and KL(U||p) share the shape
// (p - target); the KL target is the uniform vector.
std::vector<double> logit_grad(const std::vector<double>& logits, int label, int k,
                               double weight) {
  std::vector<double> g = softmax(logits);
  if (label >= 0) {
    g[label] -= 1.0;
  } else {
    const double u = 1.0 / k;
    for (double& v : g) v -= u;
  }
  for (double& v : g) v *= weight;
  return g;
}

void backprop_example(const ClassifierParams& params, const Trace& t,
                      std::vector<double> dlogits,
                      const std::vector<std::vector<double>>* unit_scale, Gradients& grads) {
  const int layers = params.layer_count();
  std::vector<double> dout = std::move(dlogits);
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& w = params.weights[l];
    Matrix& gw = grads.weights[l];
    auto& gb = grads.biases[l];
    const auto& hin = t.h[l];
    for (int r = 0; r < w.rows; ++r) {
      gb[r] += dout[r];
      double* grow = &gw.data[static_cast<std::size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) grow[c] += dout[r] * hin[c];
    }
    if (l == 0) break;
    std::vector<double> dh(w.cols, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      const double* row = &w.data[static_cast<std::size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) dh[c] += row[c] * dout[r];
    }
    // through dropout scaling and the rectifier of hidden layer l-1
    const auto& pre = t.pre[l - 1];
    for (int c = 0; c < w.cols; ++c) {
      double s = unit_scale ? (*unit_scale)[l - 1][c] : 1.0;
      dh[c] = pre[c] > 0.0 ? dh[c] * s : 0.0;
    }
    dout = std::move(dh);
  }
}

Gradients zero_gradients(const ClassifierParams& params) {
  Gradients g;
  for (int l = 0; l < params.layer_count(); ++l) {
    g.weights.emplace_back(params.weights[l].rows, params.weights[l].cols);
    g.biases.emplace_back(params.biases[l].size(), 0.0);
  }
  return g;
}

const std::vector<std::vector<double>>* mask_for(const DropoutMask* mask, std::size_t example) {
  if (!mask || mask->empty()) return nullptr;
  return &mask->scale.at(example);
}

}  // namespace

LossBreakdown batch_loss(const ClassifierParams& params, std::span<const IndExample> ind_batch,
                         std::span<const std::vector<double>> ood_batch, double alpha,
                         const DropoutMask* mask) {
  if (ind_batch.empty()) throw ValidationError("batch_loss: empty IND batch");
  LossBreakdown loss;
  for (std::size_t i = 0; i < ind_batch.size(); ++i) {
    Trace t = forward_traced(params, ind_batch[i].input, mask_for(mask, i));
    Prediction pred;
    pred.logits = t.pre.back();
    pred.probs = softmax(pred.logits);
    loss.ce_term += cross_entropy(pred, ind_batch[i].label);
  }
  loss.ce_term /= static_cast<double>(ind_batch.size());
  if (!ood_batch.empty()) {
    for (std::size_t i = 0; i < ood_batch.size(); ++i) {
      Trace t = forward_traced(params, ood_batch[i], mask_for(mask, ind_batch.size() + i));
      Prediction pred;
      pred.logits = t.pre.back();
      pred.probs = softmax(pred.logits);
      loss.entropy_term += entropy_reg(pred, params.k);
    }
    loss.entropy_term /= static_cast<double>(ood_batch.size());
  }
  loss.total = loss.ce_term + alpha * loss.entropy_term;
  return loss;
}

Gradients gradients(const ClassifierParams& params, std::span<const IndExample> ind_batch,
                    std::span<const std::vector<double>> ood_batch, double alpha,
                    const DropoutMask* mask) {
  if (ind_batch.empty()) throw ValidationError("gradients: empty IND batch");
  Gradients grads = zero_gradients(params);
  const double ind_weight = 1.0 / static_cast<double>(ind_batch.size());
  for (std::size_t i = 0; i < ind_batch.size(); ++i) {
    const auto* scale = mask_for(mask, i);
    Trace t = forward_traced(params, ind_batch[i].input, scale);
    backprop_example(params, t, logit_grad(t.pre.back(), ind_batch[i].label, params.k, ind_weight),
                     scale, grads);
  }
  if (alpha != 0.0 && !ood_batch.empty()) {
    const double ood_weight = alpha / static_cast<double>(ood_batch.size());
    for (std::size_t i = 0; i < ood_batch.size(); ++i) {
      const auto* scale = mask_for(mask, ind_batch.size() + i);
      Trace t = forward_traced(params, ood_batch[i], scale);
      backprop_example(params, t, logit_grad(t.pre.back(), -1, params.k, ood_weight), scale,
                       grads);
    }
  }
  return grads;
}

namespace {

struct AdamState {
  Gradients m;
  Gradients v;
  long t = 0;
};

void adam_step(ClassifierParams& params, const Gradients& grads, AdamState& state, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (int l = 0; l < params.layer_count(); ++l) {
    auto update = [&](double& theta, double g, double& m, double& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g * g;
      theta -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    };
    for (std::size_t i = 0; i < params.weights[l].data.size(); ++i)
      update(params.weights[l].data[i], grads.weights[l].data[i], state.m.weights[l].data[i],
             state.v.weights[l].data[i]);
    for (std::size_t i = 0; i < params.biases[l].size(); ++i)
      update(params.biases[l][i], grads.biases[l][i], state.m.biases[l][i],
             state.v.biases[l][i]);
  }
}

}  // namespace

TrainResult train(const TrainData& data, const TrainConfig& config) {
  if (data.ind_train.empty()) throw ValidationError("train: empty IND train split");
  if (data.k < 2) throw ValidationError("train: k must be at least 2");
  if (config.learning_rate <= 0) throw ValidationError("train: learning_rate must be positive");
  if (config.batch_size < 1) throw ValidationError("train: batch_size must be at least 1");
  if (config.dropout_rate < 0 || config.dropout_rate >= 1)
    throw ValidationError("train: dropout_rate must lie in [0,1)");
  if (config.ood_ratio < 0 || config.ood_ratio >= 1)
    throw ValidationError("train: ood_ratio must lie in [0,1)");

  ClassifierParams params = init_params(data.input_dim, config.hidden_dims, data.k,
                                        mix64(config.seed ^ 0x1d1));
  AdamState adam{zero_gradients(params), zero_gradients(params), 0};

  // OOD data participates only when the regularizer is live; the streams are
  // kept separate so the IND trajectory does not shift when it is not.
  const bool use_ood = config.alpha != 0.0 && !data.ood_train.empty();
  int ood_per_batch = use_ood
      ? std::max<int>(1, static_cast<int>(std::llround(config.batch_size * config.ood_ratio)))
      : 0;
  int ind_per_batch = use_ood ? std::max(1, config.batch_size - ood_per_batch)
                              : config.batch_size;

  Rng ind_rng = Rng::stream(config.seed, 2);
  Rng ood_rng = Rng::stream(config.seed, 3);
  Rng dropout_rng = Rng::stream(config.seed, 4);

  std::vector<std::size_t> ind_order(data.ind_train.size());
  std::iota(ind_order.begin(), ind_order.end(), 0);
  std::vector<std::size_t> ood_order(data.ood_train.size());
  std::iota(ood_order.begin(), ood_order.end(), 0);
  std::size_t ood_pos = ood_order.size();  // forces a shuffle on first use

  TrainResult result;
  result.best_val_acc = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    ind_rng.shuffle(ind_order);
    const int steps = static_cast<int>(
        std::max<std::size_t>(1, data.ind_train.size() / static_cast<std::size_t>(ind_per_batch)));
    double ep_ce = 0, ep_ent = 0, ep_total = 0;

    for (int step = 0; step < steps; ++step) {
      std::vector<IndExample> ind_batch;
      ind_batch.reserve(ind_per_batch);
      for (int i = 0; i < ind_per_batch; ++i) {
        std::size_t pos = (static_cast<std::size_t>(step) * ind_per_batch + i) % ind_order.size();
        ind_batch.push_back(data.ind_train[ind_order[pos]]);
      }
      std::vector<std::vector<double>> ood_batch;
      if (use_ood) {
        ood_batch.reserve(ood_per_batch);
        for (int i = 0; i < ood_per_batch; ++i) {
          if (ood_pos >= ood_order.size()) {
            ood_rng.shuffle(ood_order);
            ood_pos = 0;
          }
          ood_batch.push_back(data.ood_train[ood_order[ood_pos++]]);
        }
      }

      DropoutMask mask = DropoutMask::sample(
          dropout_rng, config.dropout_rate,
          static_cast<int>(ind_batch.size() + ood_batch.size()), config.hidden_dims);
      const DropoutMask* mask_ptr = mask.empty() ? nullptr : &mask;

      LossBreakdown loss = batch_loss(params, ind_batch, ood_batch, config.alpha, mask_ptr);
      if (!std::isfinite(loss.total))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      ep_ce += loss.ce_term;
      ep_ent += loss.entropy_term;
      ep_total += loss.total;

      Gradients grads = gradients(params, ind_batch, ood_batch, config.alpha, mask_ptr);
      adam_step(params, grads, adam, config.learning_rate);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.ce = ep_ce / steps;
    entry.entropy = ep_ent / steps;
    entry.total = ep_total / steps;
    entry.val_acc = data.ind_val.empty() ? 0.0 : accuracy(params, data.ind_val);
    result.log.push_back(entry);

    // ties keep the later checkpoint, so equal-accuracy epochs still let
    // the regularizer converge
    if (!data.ind_val.empty() && entry.val_acc >= result.best_val_acc) {
      result.best_val_acc = entry.val_acc;
      result.best_epoch = epoch;
      result.params = params;
    }
  }
  if (data.ind_val.empty()) {  // no validation data: keep the final iterate
    result.params = std::move(params);
    result.best_epoch = config.epochs;
    result.best_val_acc = 0.0;
  }
  return result;
}

double accuracy(const ClassifierParams& params, std::span<const IndExample> examples) {
  if (examples.empty()) return 0.0;
  long correct = 0;
  for (const auto& ex : examples) {
    Prediction pred = forward(params, ex.input);
    auto arg = std::max_element(pred.probs.begin(), pred.probs.end()) - pred.probs.begin();
    if (static_cast<int>(arg) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

void save_epoch_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write epoch log: " + path);
  for (const auto& e : log) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["ce"] = e.ce;
    j["entropy"] = e.entropy;
    j["total"] = e.total;
    j["val_acc"] = e.val_acc;
    out << j.dump() << '\n';
  }
}

}  // namespace pnpood
