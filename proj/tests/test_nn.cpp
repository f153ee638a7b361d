#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gradient_check.hpp"
#include "ssda/nn.hpp"

using ssda::Vec;
namespace nn = ssda::nn;

namespace {

// A model with no MLP layers: the feature vector is the input itself, which
// pins down the cosine head in isolation.
nn::ModelState head_only_model(const std::vector<Vec>& prototypes, double temperature) {
  nn::ModelState model;
  model.temperature = temperature;
  const int k = static_cast<int>(prototypes.size());
  const int d = static_cast<int>(prototypes[0].size());
  model.params.head = ssda::Matrix(k, d);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < d; ++j) model.params.head(c, j) = prototypes[c][j];
  }
  model.momentum = nn::zeros_like(model.params);
  return model;
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("cosine logits: parallel feature hits 1/temperature") {
  nn::ModelState model = head_only_model({{2.0, 0.0}, {0.0, 1.0}}, 0.05);
  nn::ForwardCache cache = nn::forward(model, {{0.5, 0.0}});
  CHECK(cache.logits[0][0] == doctest::Approx(20.0).epsilon(1e-12));  // 1 / 0.05
  CHECK(cache.logits[0][1] == doctest::Approx(0.0).epsilon(1e-12));   // orthogonal
}

TEST_CASE("softmax of equal logits is uniform") {
  nn::ModelState model = head_only_model({{1.0, 0.0}, {1.0, 0.0}}, 0.05);
  nn::ForwardCache cache = nn::forward(model, {{0.0, 3.0}});
  CHECK(cache.probs[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cache.probs[0][1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward validates inputs") {
  nn::ModelState model = nn::default_model(2, 3, 0.05, 1);
  CHECK_THROWS_AS(nn::forward(model, {}), std::invalid_argument);
  CHECK_THROWS_AS(nn::forward(model, {{1.0, 2.0, 3.0}}), std::invalid_argument);
  CHECK_THROWS_AS(nn::forward(model, {{1.0, std::nan("")}}), std::invalid_argument);
}

TEST_CASE("forward is deterministic bitwise") {
  nn::ModelState model = nn::default_model(2, 4, 0.05, 7);
  std::vector<Vec> batch = {{0.3, -1.2}, {2.0, 0.1}};
  nn::ForwardCache a = nn::forward(model, batch);
  nn::ForwardCache b = nn::forward(model, batch);
  CHECK(a.probs == b.probs);
  CHECK(a.logits == b.logits);
  CHECK(a.features == b.features);
}

TEST_CASE("softmax sums to one and logits stay within the cosine range") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    gradcheck::RandomCase c = gradcheck::random_case(rng);
    nn::ForwardCache cache = nn::forward(c.model, c.batch);
    const double bound = 1.0 / c.model.temperature;
    for (std::size_t i = 0; i < c.batch.size(); ++i) {
      double sum = 0.0;
      for (double p : cache.probs[i]) sum += p;
      CHECK(std::abs(sum - 1.0) < 1e-9);
      for (double l : cache.logits[i]) {
        CHECK(l <= bound + 1e-12);
        CHECK(l >= -bound - 1e-12);
      }
    }
  }
}

TEST_CASE("cross entropy analytic values") {
  CHECK(nn::cross_entropy({0.0, 1.0, 0.0}, nn::one_hot(3, 1)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(nn::cross_entropy({0.25, 0.25, 0.25, 0.25}, nn::one_hot(4, 2)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(nn::cross_entropy({0.5, 0.5}, nn::SoftLabel{{0.5, 0.5}}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(nn::cross_entropy({0.5, 0.5}, nn::one_hot(3, 0)), std::invalid_argument);
}

TEST_CASE("backward matches central finite differences on a 2-8-4 model") {
  std::mt19937_64 rng(2024);
  nn::ModelState model = nn::make_model(2, {8}, 4, 3, 0.05, rng());
  std::vector<Vec> batch;
  std::vector<nn::SoftLabel> targets;
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 2);
  for (int i = 0; i < 6; ++i) {
    batch.push_back({coord(rng), coord(rng)});
    targets.push_back(nn::one_hot(3, cls(rng)));
  }
  nn::ForwardCache cache = nn::forward(model, batch);
  nn::Gradients analytic = nn::backward(model, cache, targets);
  nn::Gradients numeric = gradcheck::numeric_gradient(model, batch, targets);
  CHECK(gradcheck::max_rel_error(analytic, numeric) < 1e-4);
}

TEST_CASE("targets equal to the model's own probabilities give zero gradients") {
  // Temperature 1 keeps every probability far above the clamp floor, so the
  // plain p - y logit gradient applies and cancels exactly.
  nn::ModelState model = nn::make_model(3, {6}, 4, 5, 1.0, 77);
  std::vector<Vec> batch = {{0.4, -1.0, 2.0}, {-0.3, 0.8, 0.1}, {1.5, 1.5, -2.0}};
  nn::ForwardCache cache = nn::forward(model, batch);
  std::vector<nn::SoftLabel> self_targets;
  for (const Vec& p : cache.probs) self_targets.push_back(nn::SoftLabel{p});
  nn::Gradients grads = nn::backward(model, cache, self_targets);
  nn::Gradients zeros = nn::zeros_like(model.params);
  CHECK(gradcheck::max_rel_error(grads, zeros) < 1e-12);
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
  std::mt19937_64 rng(6);
  gradcheck::RandomCase c = gradcheck::random_case(rng);
  nn::ForwardCache cache = nn::forward(c.model, c.batch);
  nn::Gradients once = nn::backward(c.model, cache, c.targets);

  std::vector<Vec> doubled = c.batch;
  doubled.insert(doubled.end(), c.batch.begin(), c.batch.end());
  std::vector<nn::SoftLabel> doubled_targets = c.targets;
  doubled_targets.insert(doubled_targets.end(), c.targets.begin(), c.targets.end());
  nn::ForwardCache cache2 = nn::forward(c.model, doubled);
  nn::Gradients twice = nn::backward(c.model, cache2, doubled_targets);
  CHECK(gradcheck::max_rel_error(once, twice) < 1e-12);
}

TEST_CASE("sgd step conventions") {
  nn::ModelState model = nn::make_model(2, {}, 2, 2, 0.05, 3);
  nn::ModelState before = model;

  SUBCASE("zero gradient and zero momentum is a fixed point") {
    nn::sgd_step(model, nn::zeros_like(model.params), 0.1, 0.9);
    CHECK(model.params == before.params);
  }

  SUBCASE("first step moves by eta * g") {
    nn::Gradients g = nn::zeros_like(model.params);
    g.head(0, 0) = 2.0;
    nn::sgd_step(model, g, 0.5, 0.9);
    CHECK(model.params.head(0, 0) == doctest::Approx(before.params.head(0, 0) - 1.0).epsilon(1e-15));
  }

  SUBCASE("two steps with constant gradient displace by g * (1 + 1.9)") {
    nn::Gradients g = nn::zeros_like(model.params);
    g.head(1, 1) = 1.0;
    nn::sgd_step(model, g, 1.0, 0.9);
    nn::sgd_step(model, g, 1.0, 0.9);
    // v1 = 1, v2 = 1.9; total displacement 2.9
    CHECK(model.params.head(1, 1) == doctest::Approx(before.params.head(1, 1) - 2.9).epsilon(1e-15));
  }

  SUBCASE("eta = 0 is the identity on parameters") {
    nn::Gradients g = nn::zeros_like(model.params);
    for (double& v : g.head.data) v = 1.23;
    nn::sgd_step(model, g, 0.0, 0.9);
    CHECK(model.params == before.params);
  }

  SUBCASE("non-finite gradients abort") {
    nn::Gradients g = nn::zeros_like(model.params);
    g.head(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(nn::sgd_step(model, g, 0.1, 0.9), std::runtime_error);
  }
}

TEST_CASE("predict returns the argmax with ties toward the lowest index") {
  nn::ModelState model = head_only_model({{1.0, 0.0}, {0.0, 1.0}}, 1.0);
  // Equidistant from both prototypes: a tie, so class 0.
  nn::Prediction p = nn::predict(model, {1.0, 1.0});
  CHECK(p.label == 0);
  CHECK(p.confidence == doctest::Approx(0.5).epsilon(1e-12));

  nn::Prediction q = nn::predict(model, {0.1, 2.0});
  CHECK(q.label == 1);
  CHECK(q.confidence > 0.5);
  CHECK(q.confidence <= 1.0);
}

TEST_CASE("gradient check over random models") {
  std::mt19937_64 rng(31337);
  double worst = 0.0;
  for (int rep = 0; rep < 25; ++rep) {
    gradcheck::RandomCase c = gradcheck::random_case(rng);
    nn::ForwardCache cache = nn::forward(c.model, c.batch);
    nn::Gradients analytic = nn::backward(c.model, cache, c.targets);
    nn::Gradients numeric = gradcheck::numeric_gradient(c.model, c.batch, c.targets);
    worst = std::max(worst, gradcheck::max_rel_error(analytic, numeric));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round-trips exactly") {
  nn::ModelState model = nn::default_model(2, 6, 0.05, 42);
  // Give the momentum buffers non-trivial content.
  nn::Gradients g = nn::zeros_like(model.params);
  g.head(2, 3) = 0.125;
  g.layers[0].weight(1, 1) = -0.5;
  nn::sgd_step(model, g, 0.01, 0.9);

  const std::string path = (std::filesystem::temp_directory_path() / "ssda_ckpt_test.txt").string();
  nn::save_checkpoint(model, path);
  nn::ModelState loaded = nn::load_checkpoint(path);
  CHECK(loaded == model);
  std::filesystem::remove(path);
}

TEST_CASE("load_checkpoint rejects garbage") {
  const std::string path = (std::filesystem::temp_directory_path() / "ssda_ckpt_bad.txt").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("not a checkpoint\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(nn::load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_SUITE_END();
