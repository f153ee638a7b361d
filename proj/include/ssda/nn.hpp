#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssda/linalg.hpp"

namespace ssda::nn {

// Probabilities below this are clamped inside the cross-entropy, and vector
// norms below it are clamped inside the cosine computation.
inline constexpr double kProbFloor = 1e-12;
inline constexpr double kNormFloor = 1e-12;

// One fully connected layer. All layers apply tanh except the last, which
// produces the feature vector unsquashed.
struct Layer {
  Matrix weight;  // out x in
  Vec bias;       // out

  bool operator==(const Layer&) const = default;
};

// Learnable parameters: the MLP stack plus one prototype row per class.
// Doubles as the gradient container since gradients share the shapes.
struct ParamSet {
  std::vector<Layer> layers;
  Matrix head;  // num_classes x feature_dim

  bool same_shape(const ParamSet& o) const;
  bool operator==(const ParamSet&) const = default;
};

using Gradients = ParamSet;

Gradients zeros_like(const ParamSet& p);
void accumulate(Gradients& into, const Gradients& g);  // into += g
bool all_finite(const ParamSet& p);

// A distribution over classes; entries are non-negative and sum to 1.
struct SoftLabel {
  Vec probs;

  bool operator==(const SoftLabel&) const = default;
};

SoftLabel one_hot(int num_classes, int y);

struct ModelState {
  ParamSet params;
  ParamSet momentum;  // same shapes as params, starts at zero
  double temperature = 0.05;
  std::uint64_t rng_seed = 0;

  int input_dim() const;
  int feature_dim() const { return params.head.cols; }
  int num_classes() const { return params.head.rows; }

  bool operator==(const ModelState&) const = default;
};

// Weights uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)), biases
// zero, momentum zero. hidden_dims may be empty (feature layer only).
ModelState make_model(int input_dim, const std::vector<int>& hidden_dims, int feature_dim,
                      int num_classes, double temperature, std::uint64_t seed);

// Desk default: input -> 32 (tanh) -> 16-dim feature -> cosine head.
ModelState default_model(int input_dim, int num_classes, double temperature, std::uint64_t seed);

// Everything the backward pass needs, per sample: pre-activations and
// activations of each layer, the feature vector, cosine logits and softmax
// probabilities. Prototype normalization is shared across the batch.
struct ForwardCache {
  std::vector<Vec> inputs;
  std::vector<std::vector<Vec>> pre;  // pre[i][l]
  std::vector<std::vector<Vec>> act;  // act[i][l]; act[i].back() is the feature
  std::vector<Vec> features;
  std::vector<double> feature_norms;  // raw (unclamped) norms
  std::vector<Vec> logits;
  std::vector<Vec> probs;
  std::vector<Vec> head_unit;  // prototype rows scaled by 1/max(norm, kNormFloor)
  Vec head_norms;              // raw prototype norms
};

// logit_c = cos(f, head_c) / temperature, probabilities = softmax(logits).
ForwardCache forward(const ModelState& model, const std::vector<Vec>& batch);

// -sum_c target_c * log(max(probs_c, kProbFloor))
double cross_entropy(const Vec& probs, const SoftLabel& target);
double mean_cross_entropy(const ForwardCache& cache, const std::vector<SoftLabel>& targets);

// Exact gradients of the mean cross-entropy over the batch with respect to
// every parameter, including through the normalization of both the feature
// and the prototype rows.
Gradients backward(const ModelState& model, const ForwardCache& cache,
                   const std::vector<SoftLabel>& targets);

// v <- momentum * v + g; w <- w - learning_rate * v. Temperature is not a
// parameter and is never touched. Throws on non-finite gradients.
void sgd_step(ModelState& model, const Gradients& grads, double learning_rate, double momentum);

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

// Argmax class and its probability; ties break toward the lowest index.
Prediction predict(const ModelState& model, const Vec& x);

// Flat text checkpoint: one header per tensor (name rows cols) followed by
// the values at full precision. Round-trips exactly.
void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace ssda::nn
