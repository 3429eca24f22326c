#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "pnpood/error.hpp"
#include "pnpood/model.hpp"
#include "pnpood/rng.hpp"

using namespace pnpood;

TEST_CASE("init_params determinism and shape") {
  ClassifierParams a = init_params(2, {4}, 3, 0);
  ClassifierParams b = init_params(2, {4}, 3, 0);
  REQUIRE(a.layer_count() == 2);
  CHECK(a.weights[0].rows == 4);
  CHECK(a.weights[0].cols == 2);
  CHECK(a.weights[1].rows == 3);
  CHECK(a.weights[1].cols == 4);
  for (int l = 0; l < a.layer_count(); ++l) {
    CHECK(a.weights[l].data == b.weights[l].data);  // bitwise identical
    for (double bias : a.biases[l]) CHECK(bias == 0.0);
  }
  // fan-in scaling bounds
  for (double w : a.weights[0].data) CHECK(std::abs(w) <= 1.0 / std::sqrt(2.0));

  CHECK_THROWS_AS(init_params(2, {4}, 1, 0), ValidationError);
  CHECK_THROWS_AS(init_params(0, {4}, 3, 0), ValidationError);
}

TEST_CASE("forward on hand-built networks") {
  SUBCASE("all-zero weights give the uniform distribution") {
    ClassifierParams p = init_params(2, {4}, 3, 0);
    for (auto& w : p.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    Prediction pred = forward(p, std::vector<double>{0.3, -0.7});
    for (double prob : pred.probs) CHECK(prob == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }

  SUBCASE("single linear layer reproduces softmax(1,0)") {
    ClassifierParams p;
    p.input_dim = 2;
    p.k = 2;
    Matrix w(2, 2);
    w.at(0, 0) = 1.0;  // identity rows
    w.at(1, 1) = 1.0;
    p.weights.push_back(w);
    p.biases.push_back({0.0, 0.0});
    Prediction pred = forward(p, std::vector<double>{1.0, 0.0});
    CHECK(pred.probs[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(pred.probs[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
  }

  SUBCASE("huge logits stay finite") {
    ClassifierParams p;
    p.input_dim = 2;
    p.k = 2;
    Matrix w(2, 2);
    w.at(0, 0) = 1000.0;
    p.weights.push_back(w);
    p.biases.push_back({0.0, 0.0});
    Prediction pred = forward(p, std::vector<double>{1.0, 0.0});
    CHECK(std::isfinite(pred.probs[0]));
    CHECK(std::isfinite(pred.probs[1]));
    CHECK(pred.probs[0] > 1.0 - 1e-9);
  }

  SUBCASE("dimension mismatch errors") {
    ClassifierParams p = init_params(3, {4}, 2, 0);
    CHECK_THROWS_AS(forward(p, std::vector<double>{1.0, 2.0}), ValidationError);
  }
}

TEST_CASE("softmax properties") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int k = 2 + static_cast<int>(rng.below(6));
    std::vector<double> logits(k);
    for (double& z : logits) z = rng.uniform(-8.0, 8.0);
    auto probs = softmax(logits);

    double sum = 0.0;
    for (double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    // shift invariance
    std::vector<double> shifted = logits;
    for (double& z : shifted) z += 123.456;
    auto probs2 = softmax(shifted);
    for (int i = 0; i < k; ++i) CHECK(probs2[i] == doctest::Approx(probs[i]).epsilon(1e-9));
  }
}

TEST_CASE("msp values and lower bound") {
  Prediction uniform{{1.0 / 3, 1.0 / 3, 1.0 / 3}, {0, 0, 0}};
  CHECK(msp(uniform) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  Prediction skewed{{0.7, 0.2, 0.1}, {}};
  CHECK(msp(skewed) == doctest::Approx(0.7));
  Prediction two{{0.5, 0.5}, {}};
  CHECK(msp(two) == doctest::Approx(0.5));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int k = 2 + static_cast<int>(rng.below(5));
    std::vector<double> logits(k);
    for (double& z : logits) z = rng.uniform(-4.0, 4.0);
    Prediction pred{softmax(logits), logits};
    CHECK(msp(pred) >= 1.0 / k - 1e-12);
  }
}

TEST_CASE("forward is deterministic") {
  ClassifierParams p = init_params(5, {8, 8}, 4, 42);
  std::vector<double> x = {0.1, -0.2, 0.3, -0.4, 0.5};
  Prediction a = forward(p, x);
  Prediction b = forward(p, x);
  CHECK(a.logits == b.logits);  // bitwise
}

TEST_CASE("checkpoint round trip") {
  ClassifierParams p = init_params(6, {5, 4}, 3, 9);
  auto path = std::filesystem::temp_directory_path() / "pnpood_model_ckpt.json";
  save_checkpoint(p, path.string());
  ClassifierParams q = load_checkpoint(path.string());
  CHECK(q.input_dim == p.input_dim);
  CHECK(q.hidden_dims == p.hidden_dims);
  CHECK(q.k == p.k);
  REQUIRE(q.layer_count() == p.layer_count());
  for (int l = 0; l < p.layer_count(); ++l) {
    CHECK(q.weights[l].data == p.weights[l].data);  // exact through JSON
    CHECK(q.biases[l] == p.biases[l]);
  }

  std::vector<double> x = {1, 2, 3, 4, 5, 6};
  CHECK(forward(p, x).logits == forward(q, x).logits);
}
