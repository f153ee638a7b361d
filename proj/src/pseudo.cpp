#include "ssda/pseudo.hpp"

#include <cmath>
#include <stdexcept>

namespace ssda::pseudo {

std::optional<GateResult> gate(const Vec& probs, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("gate: tau must be in [0, 1)");
  if (probs.empty()) throw std::invalid_argument("gate: invalid probability distribution (empty)");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument("gate: invalid probability distribution");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("gate: invalid probability distribution");

  int best = 0;
  for (int c = 1; c < static_cast<int>(probs.size()); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  if (probs[best] > tau) return GateResult{best, probs[best]};
  return std::nullopt;
}

PseudoLabelSet build_pseudo_set(const nn::ModelState& teacher, const std::vector<Vec>& unlabeled_batch,
                                double tau, TeacherId teacher_id) {
  nn::ForwardCache cache = nn::forward(teacher, unlabeled_batch);
  PseudoLabelSet set;
  set.tau_used = tau;
  set.teacher = teacher_id;
  for (int b = 0; b < static_cast<int>(unlabeled_batch.size()); ++b) {
    if (auto gated = gate(cache.probs[b], tau)) {
      set.items.push_back({b, unlabeled_batch[b], gated->label, gated->confidence});
    }
  }
  return set;
}

}  // namespace ssda::pseudo
