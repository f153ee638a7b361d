#include "ssda/mixup.hpp"

#include <stdexcept>

namespace ssda::mixup {

double sample_lambda(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_lambda: alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  const double s = x + y;
  if (s <= 0.0) return 0.5;  // both gammas underflowed
  return x / s;
}

MixedExample mix_pair(const Vec& x1, int y1, const Vec& x2, int y2, int num_classes, double lambda) {
  if (x1.size() != x2.size()) throw std::invalid_argument("mix_pair: dimension mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mix_pair: lambda must be in [0, 1]");
  if (y1 < 0 || y1 >= num_classes || y2 < 0 || y2 >= num_classes) {
    throw std::invalid_argument("mix_pair: class index out of range");
  }

  MixedExample out;
  out.lambda = lambda;
  out.x.resize(x1.size());
  for (std::size_t j = 0; j < x1.size(); ++j) out.x[j] = (1.0 - lambda) * x1[j] + lambda * x2[j];
  out.y.probs.assign(num_classes, 0.0);
  if (y1 == y2) {
    out.y.probs[y1] = 1.0;
  } else {
    out.y.probs[y1] = 1.0 - lambda;
    out.y.probs[y2] = lambda;
  }
  return out;
}

std::vector<MixedExample> mix_sets(const pseudo::PseudoLabelSet& pseudo_set,
                                   const std::vector<datagen::Sample>& labeled_batch,
                                   int num_classes, double alpha, std::mt19937_64& rng) {
  if (pseudo_set.size() > labeled_batch.size()) {
    throw std::invalid_argument("mix_sets: pseudo set larger than labeled batch");
  }
  std::vector<MixedExample> out;
  out.reserve(pseudo_set.size());
  for (std::size_t i = 0; i < pseudo_set.size(); ++i) {
    const pseudo::PseudoItem& p = pseudo_set.items[i];
    const datagen::Sample& l = labeled_batch[i];
    out.push_back(mix_pair(p.x, p.label, l.x, l.y, num_classes, sample_lambda(alpha, rng)));
  }
  return out;
}

}  // namespace ssda::mixup
