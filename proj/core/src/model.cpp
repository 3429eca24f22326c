#include "pnpood/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "pnpood/error.hpp"
#include "pnpood/rng.hpp"

namespace pnpood {

ClassifierParams init_params(int input_dim, const std::vector<int>& hidden_dims, int k,
                             std::uint64_t seed) {
  if (input_dim <= 0) throw ValidationError("init_params: input_dim must be positive");
  for (int h : hidden_dims)
    if (h <= 0) throw ValidationError("init_params: hidden dims must be positive");
  if (k < 2) throw ValidationError("init_params: k must be at least 2");

  ClassifierParams params;
  params.input_dim = input_dim;
  params.hidden_dims = hidden_dims;
  params.k = k;

  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(k);

  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l];
    int fan_out = dims[l + 1];
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data) v = rng.uniform(-scale, scale);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(fan_out, 0.0);
  }
  return params;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

Prediction forward(const ClassifierParams& params, const std::vector<double>& embedding) {
  if (static_cast<int>(embedding.size()) != params.input_dim)
    throw ValidationError("forward: embedding dimension " + std::to_string(embedding.size()) +
                          " does not match input_dim " + std::to_string(params.input_dim));

  std::vector<double> h = embedding;
  const int layers = params.layer_count();
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = params.weights[l];
    const auto& b = params.biases[l];
    std::vector<double> out(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      double acc = b[r];
      const double* row = &w.data[static_cast<std::size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) acc += row[c] * h[c];
      out[r] = acc;
    }
    if (l + 1 < layers)
      for (double& v : out) v = std::max(v, 0.0);
    h = std::move(out);
  }

  Prediction pred;
  pred.logits = std::move(h);
  pred.probs = softmax(pred.logits);
  return pred;
}

double msp(const Prediction& prediction) {
  return *std::max_element(prediction.probs.begin(), prediction.probs.end());
}

void save_checkpoint(const ClassifierParams& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "pnpood-checkpoint";
  j["version"] = 1;
  j["input_dim"] = params.input_dim;
  j["hidden_dims"] = params.hidden_dims;
  j["k"] = params.k;
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < params.layer_count(); ++l) {
    nlohmann::json layer;
    layer["rows"] = params.weights[l].rows;
    layer["cols"] = params.weights[l].cols;
    layer["weights"] = params.weights[l].data;
    layer["bias"] = params.biases[l];
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

ClassifierParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", std::string{}) != "pnpood-checkpoint")
    throw ValidationError("not a pnpood checkpoint: " + path);
  if (j.value("version", 0) != 1)
    throw ValidationError("unsupported checkpoint version in " + path);

  ClassifierParams params;
  params.input_dim = j.at("input_dim").get<int>();
  params.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  params.k = j.at("k").get<int>();
  for (const auto& layer : j.at("layers")) {
    Matrix w(layer.at("rows").get<int>(), layer.at("cols").get<int>());
    w.data = layer.at("weights").get<std::vector<double>>();
    if (w.data.size() != static_cast<std::size_t>(w.rows) * w.cols)
      throw ValidationError("checkpoint layer size mismatch in " + path);
    params.weights.push_back(std::move(w));
    params.biases.push_back(layer.at("bias").get<std::vector<double>>());
  }
  return params;
}

}  // namespace pnpood
