#pragma once

#include <random>
#include <vector>

#include "ssda/datagen.hpp"
#include "ssda/linalg.hpp"
#include "ssda/nn.hpp"
#include "ssda/pseudo.hpp"

namespace ssda::mixup {

// A virtual example on the segment between its two sources. The soft label
// has at most two nonzero entries and sums to 1.
struct MixedExample {
  Vec x;
  nn::SoftLabel y;
  double lambda = 0.0;
};

// One draw from Beta(alpha, alpha); alpha = 1 makes it Uniform[0, 1].
double sample_lambda(double alpha, std::mt19937_64& rng);

// x~ = (1 - lambda) x1 + lambda x2, y~ = (1 - lambda) e_{y1} + lambda e_{y2}.
MixedExample mix_pair(const Vec& x1, int y1, const Vec& x2, int y2, int num_classes, double lambda);

// Mixes the i-th pseudo-labeled example (its label treated as hard) with the
// i-th labeled example, one fresh lambda per pair. Requires the pseudo set
// to be no larger than the labeled batch; an empty set yields an empty list.
std::vector<MixedExample> mix_sets(const pseudo::PseudoLabelSet& pseudo_set,
                                   const std::vector<datagen::Sample>& labeled_batch,
                                   int num_classes, double alpha, std::mt19937_64& rng);

}  // namespace ssda::mixup
