#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssda/datagen.hpp"
#include "ssda/diagnostics.hpp"
#include "ssda/nn.hpp"

namespace ssda::trainer {

enum class Method {
  decota,           // two tasks exchanging confidence-gated pseudo-labels, with mixup
  mist,             // single model, self-gated pseudo-labels mixed with both S and T
  st_pseudo,        // single model, self-gated hard pseudo-labels, no mixup
  two_view_mist,    // the two tasks trained independently (each self-gated)
  one_direction_f,  // like decota but the target-task model gates both sets
  one_direction_g,  // like decota but the source-task model gates both sets
  vanilla_ensemble, // two independently initialized mist models, ensembled
  s_only,           // supervised on source batches only
  s_plus_t,         // supervised on source and target-labeled batches
  t_only            // supervised on target-labeled batches only
};

std::string to_string(Method m);
std::optional<Method> method_from_string(std::string_view name);
std::vector<Method> all_methods();

struct TrainConfig {
  Method method = Method::decota;
  double tau = 0.5;
  double alpha = 1.0;
  double eta = 0.001;
  double momentum = 0.9;
  int batch_size = 24;
  int n_max = 3000;
  double temperature = 0.05;
  int eval_every = 100;
  int pretrain_iters_s = 500;
  int finetune_iters_t = 100;
  std::uint64_t seed = 0;
  bool swap_init = false;  // flip which init (source-only vs target-fine-tuned) goes to which task
  double epsilon = 2.0;    // expandability threshold recorded by diagnostics

  void validate() const;  // throws std::invalid_argument
};

// Effective configuration as key=value lines (the same keys the CLI accepts).
std::string to_key_value(const TrainConfig& cfg);

struct RunResult {
  std::vector<nn::ModelState> models;  // target-task model first when there are two
  std::vector<diagnostics::DiagnosticsRecord> records;
  TrainConfig config;
  double wall_time_seconds = 0.0;
};

// Shuffled cycling through one pool: every index appears once per epoch,
// reshuffling on exhaustion (a batch may straddle two epochs).
class BatchCycler {
 public:
  BatchCycler(int pool_size, std::mt19937_64 rng);
  std::vector<int> next(int batch_size);

 private:
  void reshuffle();
  std::vector<int> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

struct UnlabeledBatch {
  std::vector<Vec> x;
  std::vector<int> pool_index;
};

// Two-stage initialization: both models branch off one seeded init pretrained
// on the source pool; the target-task model is additionally fine-tuned on the
// labeled target pool. swap_init hands the source-only model to the target
// task instead. Momentum buffers are zeroed on hand-off.
std::pair<nn::ModelState, nn::ModelState> init_pair(const datagen::SsdaDataset& ds,
                                                    const TrainConfig& cfg);

// One co-training iteration: each model's pseudo-labels come from the other
// model's pre-step weights, get mixed with that model's labeled batch, and
// both models take a single momentum step with the summed gradient.
void decota_step(nn::ModelState& model_f, nn::ModelState& model_g,
                 const std::vector<datagen::Sample>& s_batch,
                 const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                 const TrainConfig& cfg, std::mt19937_64& lambda_f, std::mt19937_64& lambda_g,
                 diagnostics::PseudoLabelWindow* window);

// Single model; its own gated set is mixed independently with the source and
// the target batch, and all four loss terms are summed into one step.
void mist_step(nn::ModelState& model, const std::vector<datagen::Sample>& s_batch,
               const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
               const TrainConfig& cfg, std::mt19937_64& lambda_rng,
               diagnostics::PseudoLabelWindow* window);

// Like mist but the gated examples enter both unlabeled loss terms directly
// as hard labels instead of being mixed.
void st_pseudo_step(nn::ModelState& model, const std::vector<datagen::Sample>& s_batch,
                    const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                    const TrainConfig& cfg, diagnostics::PseudoLabelWindow* window);

// Like decota but each model gates its own pseudo-labels (no exchange).
void two_view_step(nn::ModelState& model_f, nn::ModelState& model_g,
                   const std::vector<datagen::Sample>& s_batch,
                   const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                   const TrainConfig& cfg, std::mt19937_64& lambda_f, std::mt19937_64& lambda_g,
                   diagnostics::PseudoLabelWindow* window);

enum class TeacherRole { f, g };

// Like decota but the designated model provides both pseudo-label sets.
void one_direction_step(TeacherRole teacher, nn::ModelState& model_f, nn::ModelState& model_g,
                        const std::vector<datagen::Sample>& s_batch,
                        const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                        const TrainConfig& cfg, std::mt19937_64& lambda_f,
                        std::mt19937_64& lambda_g, diagnostics::PseudoLabelWindow* window);

// Averages the two softmax outputs, then takes the argmax (ties toward the
// lowest class index).
nn::Prediction ensemble_predict(const nn::ModelState& a, const nn::ModelState& b, const Vec& x);

using RecordSink = std::function<void(const diagnostics::DiagnosticsRecord&)>;

// Full training run: initializes per the method, cycles per-pool shuffled
// batches, dispatches the method's step, and appends a diagnostics record at
// iteration 0, every eval_every iterations, and at the end. The sink (if
// given) receives each record as soon as it exists, so aborted runs keep
// their partial stream. Deterministic given (dataset, config).
RunResult run(const datagen::SsdaDataset& ds, const TrainConfig& cfg, const RecordSink& sink = {});

}  // namespace ssda::trainer
