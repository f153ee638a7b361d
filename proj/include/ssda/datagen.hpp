#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssda/linalg.hpp"

namespace ssda::datagen {

enum class DomainKind { gaussian_mixture, two_moons };

std::string to_string(DomainKind kind);

// Rigid-ish transform taking the shared base geometry into a domain:
// rotation (in the plane of the first two coordinates), then scale, then
// translation.
struct ShiftSpec {
  double rotation_degrees = 0.0;
  Vec translation;  // length input_dim; empty means zero
  double scale = 1.0;
};

struct DomainSpec {
  DomainKind kind = DomainKind::gaussian_mixture;
  int num_classes = 6;
  int input_dim = 2;
  double class_separation = 1.5;
  double noise_sigma = 0.55;
  ShiftSpec shift;
  int samples_per_class = 300;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

struct Sample {
  Vec x;
  int y = 0;

  bool operator==(const Sample&) const = default;
};

// The three training pools plus a held-out target test set. Ground-truth
// labels of the unlabeled pool are stored but reachable only through
// EvalView, so training code cannot read them by accident.
class SsdaDataset {
 public:
  SsdaDataset() = default;
  SsdaDataset(std::vector<Sample> source_labeled, std::vector<Sample> target_labeled,
              std::vector<Sample> target_unlabeled, std::vector<Sample> target_test,
              int num_classes, int input_dim, int shots);

  const std::vector<Sample>& source_labeled() const { return source_labeled_; }
  const std::vector<Sample>& target_labeled() const { return target_labeled_; }
  const std::vector<Sample>& target_test() const { return target_test_; }
  const std::vector<Vec>& unlabeled() const { return unlabeled_x_; }
  int num_unlabeled() const { return static_cast<int>(unlabeled_x_.size()); }

  int num_classes() const { return num_classes_; }
  int input_dim() const { return input_dim_; }
  int shots() const { return shots_; }

  class EvalView {
   public:
    int hidden_label(int unlabeled_index) const;

   private:
    friend class SsdaDataset;
    explicit EvalView(const SsdaDataset* ds) : ds_(ds) {}
    const SsdaDataset* ds_;
  };

  // Only evaluation and diagnostics code may take this view.
  EvalView evaluation_view() const { return EvalView(this); }

  bool operator==(const SsdaDataset&) const = default;

 private:
  std::vector<Sample> source_labeled_;
  std::vector<Sample> target_labeled_;
  std::vector<Vec> unlabeled_x_;
  std::vector<int> unlabeled_hidden_y_;
  std::vector<Sample> target_test_;
  int num_classes_ = 0;
  int input_dim_ = 0;
  int shots_ = 0;
};

// Draws both domain pools, selects `shots` labeled target samples per class
// uniformly at random, and splits the remaining target pool 80/20 into
// unlabeled and test. Deterministic in (specs, shots, seed).
SsdaDataset generate(const DomainSpec& source, const DomainSpec& target, int shots,
                     std::uint64_t seed);

// CSV schema: header "split,y,x_0,...,x_{d-1}", then one row per sample with
// split in {S, T, U, test}. Unlabeled rows carry the hidden label. Values at
// full precision, so the round trip is exact.
void save_csv(const SsdaDataset& ds, const std::string& path);
SsdaDataset load_csv(const std::string& path);

// Key=value sidecar recording the generation parameters next to the CSV.
void save_spec_file(const DomainSpec& source, const DomainSpec& target, int shots,
                    std::uint64_t seed, const std::string& path);

}  // namespace ssda::datagen
