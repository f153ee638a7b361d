#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssda/datagen.hpp"
#include "ssda/linalg.hpp"
#include "ssda/nn.hpp"

namespace ssda::diagnostics {

// One evaluation snapshot of a run. h_both/h_one/h_none partition the full
// unlabeled pool by how many of the two models are confident on each sample;
// the window fields count pseudo-label events since the previous record.
struct DiagnosticsRecord {
  long long iteration = 0;
  double acc_f = 0.0;
  double acc_g = 0.0;
  double acc_ensemble = 0.0;
  double acc_source_test = 0.0;
  long long h_both = 0;
  long long h_one = 0;
  long long h_none = 0;
  bool epsilon_holds = false;
  double epsilon_max = 0.0;  // +infinity when min(h_both, h_none) = 0
  long long pseudo_count_window = 0;
  long long pseudo_correct_window = 0;
};

// Pseudo-label events accumulated by the trainer between snapshots: one
// entry per (iteration, batch item) that at least one teacher was confident
// on. Correctness is only resolved inside snapshot, against hidden labels.
struct PseudoLabelWindow {
  struct Event {
    int pool_index = 0;
    int labels[2] = {0, 0};
    int n_labels = 0;
  };
  std::vector<Event> events;

  void add(int pool_index, int label) { events.push_back({pool_index, {label, 0}, 1}); }
  void add(int pool_index, int label_a, int label_b) {
    events.push_back({pool_index, {label_a, label_b}, 2});
  }
  void clear() { events.clear(); }
};

// 1 iff max_c p(c | u) > tau, via the same strict gate used for
// pseudo-label selection.
int confidence_indicator(const nn::ModelState& model, const Vec& u, double tau);

struct HCounts {
  long long both = 0;
  long long one = 0;
  long long none = 0;
};

// Exact counts of samples on which both, exactly one, and none of the two
// indicator vectors fire. Vectors must have equal length.
HCounts aggregate(const std::vector<std::uint8_t>& indicators_t,
                  const std::vector<std::uint8_t>& indicators_s);

// h_one >= epsilon * min(h_both, h_none)
bool expandability(long long h_both, long long h_one, long long h_none, double epsilon);

// Largest epsilon satisfying the condition above; +infinity when the min
// is zero.
double epsilon_max(long long h_both, long long h_one, long long h_none);

double accuracy(const nn::ModelState& model, const std::vector<datagen::Sample>& samples);
double ensemble_accuracy(const nn::ModelState& model_f, const nn::ModelState& model_g,
                         const std::vector<datagen::Sample>& samples);

// Evaluates both models and their ensemble on the target test set and the
// source pool, computes the confidence indicators over the full unlabeled
// pool, and reads-then-resets the window counters. model_f is the
// target-task model, model_g the source-task one; pass the same model twice
// for single-model methods.
DiagnosticsRecord snapshot(const nn::ModelState& model_f, const nn::ModelState& model_g,
                           const datagen::SsdaDataset& ds, double tau, double epsilon,
                           long long iteration, PseudoLabelWindow& window);

// Fixed column order shared by the CSV and JSONL encodings:
// iteration, acc_f, acc_g, acc_ensemble, acc_source_test, h_both, h_one,
// h_none, epsilon_holds, epsilon_max, pseudo_count_window,
// pseudo_correct_window. An infinite epsilon_max serializes as "inf".
std::string csv_header();
std::string to_csv_row(const DiagnosticsRecord& rec);
std::string to_jsonl(const DiagnosticsRecord& rec);

}  // namespace ssda::diagnostics
