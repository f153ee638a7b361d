#pragma once

#include <optional>
#include <vector>

#include "ssda/linalg.hpp"
#include "ssda/nn.hpp"

namespace ssda::pseudo {

enum class TeacherId { f, g, self };

struct PseudoItem {
  int index_in_batch = 0;
  Vec x;
  int label = 0;
  double confidence = 0.0;
};

// Confidence-gated hard labels for (a subset of) one unlabeled mini-batch.
// Every item passed the strict max-probability > tau test.
struct PseudoLabelSet {
  std::vector<PseudoItem> items;
  double tau_used = 0.0;
  TeacherId teacher = TeacherId::self;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

struct GateResult {
  int label = 0;
  double confidence = 0.0;
};

// Some(argmax, max) iff max > tau strictly, None otherwise. Argmax ties
// break toward the lowest class index. tau must lie in [0, 1).
std::optional<GateResult> gate(const Vec& probs, double tau);

// Applies the gate to every item of the batch using the teacher's current
// weights, preserving batch order.
PseudoLabelSet build_pseudo_set(const nn::ModelState& teacher, const std::vector<Vec>& unlabeled_batch,
                                double tau, TeacherId teacher_id);

}  // namespace ssda::pseudo
