#include "ssda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

#include "ssda/mixup.hpp"
#include "ssda/pseudo.hpp"
#include "ssda/rng.hpp"

namespace ssda::trainer {

namespace {

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kMethodNames[] = {
    {Method::decota, "decota"},
    {Method::mist, "mist"},
    {Method::st_pseudo, "st_pseudo"},
    {Method::two_view_mist, "two_view_mist"},
    {Method::one_direction_f, "one_direction_f"},
    {Method::one_direction_g, "one_direction_g"},
    {Method::vanilla_ensemble, "vanilla_ensemble"},
    {Method::s_only, "s_only"},
    {Method::s_plus_t, "s_plus_t"},
    {Method::t_only, "t_only"},
};

std::vector<nn::SoftLabel> hard_targets(const std::vector<datagen::Sample>& batch, int num_classes) {
  std::vector<nn::SoftLabel> targets;
  targets.reserve(batch.size());
  for (const datagen::Sample& s : batch) targets.push_back(nn::one_hot(num_classes, s.y));
  return targets;
}

nn::Gradients supervised_grad(const nn::ModelState& model, const std::vector<datagen::Sample>& batch) {
  std::vector<Vec> inputs;
  inputs.reserve(batch.size());
  for (const datagen::Sample& s : batch) inputs.push_back(s.x);
  nn::ForwardCache cache = nn::forward(model, inputs);
  return nn::backward(model, cache, hard_targets(batch, model.num_classes()));
}

nn::Gradients mixed_grad(const nn::ModelState& model, const std::vector<mixup::MixedExample>& mixed) {
  std::vector<Vec> inputs;
  std::vector<nn::SoftLabel> targets;
  inputs.reserve(mixed.size());
  targets.reserve(mixed.size());
  for (const mixup::MixedExample& m : mixed) {
    inputs.push_back(m.x);
    targets.push_back(m.y);
  }
  nn::ForwardCache cache = nn::forward(model, inputs);
  return nn::backward(model, cache, targets);
}

nn::Gradients pseudo_grad(const nn::ModelState& model, const pseudo::PseudoLabelSet& set) {
  std::vector<Vec> inputs;
  std::vector<nn::SoftLabel> targets;
  inputs.reserve(set.size());
  targets.reserve(set.size());
  for (const pseudo::PseudoItem& item : set.items) {
    inputs.push_back(item.x);
    targets.push_back(nn::one_hot(model.num_classes(), item.label));
  }
  nn::ForwardCache cache = nn::forward(model, inputs);
  return nn::backward(model, cache, targets);
}

// One window event per batch item that at least one gate fired on.
void record_window(diagnostics::PseudoLabelWindow* window, const UnlabeledBatch& u_batch,
                   const pseudo::PseudoLabelSet& set_a, const pseudo::PseudoLabelSet* set_b) {
  if (window == nullptr) return;
  const int b = static_cast<int>(u_batch.x.size());
  std::vector<int> label_a(b, -1), label_b(b, -1);
  for (const pseudo::PseudoItem& item : set_a.items) label_a[item.index_in_batch] = item.label;
  if (set_b != nullptr) {
    for (const pseudo::PseudoItem& item : set_b->items) label_b[item.index_in_batch] = item.label;
  }
  for (int i = 0; i < b; ++i) {
    const int pool = u_batch.pool_index[i];
    if (label_a[i] >= 0 && label_b[i] >= 0) {
      window->add(pool, label_a[i], label_b[i]);
    } else if (label_a[i] >= 0) {
      window->add(pool, label_a[i]);
    } else if (label_b[i] >= 0) {
      window->add(pool, label_b[i]);
    }
  }
}

// Supervised pretraining phase over one pool; momentum is zeroed on hand-off
// so the main loop starts from a fresh optimizer.
void supervised_phase(nn::ModelState& model, const std::vector<datagen::Sample>& pool, int iters,
                      const TrainConfig& cfg, std::mt19937_64 rng) {
  if (iters == 0) return;
  BatchCycler cycler(static_cast<int>(pool.size()), std::move(rng));
  for (int i = 0; i < iters; ++i) {
    std::vector<datagen::Sample> batch;
    batch.reserve(cfg.batch_size);
    for (int idx : cycler.next(cfg.batch_size)) batch.push_back(pool[idx]);
    nn::sgd_step(model, supervised_grad(model, batch), cfg.eta, cfg.momentum);
  }
  model.momentum = nn::zeros_like(model.params);
}

// Seeded init pretrained on the source pool. The prefix selects an
// independent set of rng streams (used for the second vanilla-ensemble
// model).
nn::ModelState init_source_model(const datagen::SsdaDataset& ds, const TrainConfig& cfg,
                                 const std::string& prefix) {
  nn::ModelState model = nn::default_model(ds.input_dim(), ds.num_classes(), cfg.temperature,
                                           stream_seed(cfg.seed, prefix + "init.model"));
  supervised_phase(model, ds.source_labeled(), cfg.pretrain_iters_s, cfg,
                   make_stream(cfg.seed, prefix + "init.cycle.s"));
  return model;
}

nn::ModelState finetune_on_target(nn::ModelState model, const datagen::SsdaDataset& ds,
                                  const TrainConfig& cfg, const std::string& prefix) {
  supervised_phase(model, ds.target_labeled(), cfg.finetune_iters_t, cfg,
                   make_stream(cfg.seed, prefix + "init.cycle.t"));
  return model;
}

// Single-model methods start from the source-pretrained, target-fine-tuned
// model (except s_only, which never sees the labeled target pool).
nn::ModelState init_single(const datagen::SsdaDataset& ds, const TrainConfig& cfg,
                           const std::string& prefix = "") {
  return finetune_on_target(init_source_model(ds, cfg, prefix), ds, cfg, prefix);
}

}  // namespace

std::string to_string(Method m) {
  for (const MethodName& entry : kMethodNames) {
    if (entry.method == m) return entry.name;
  }
  return "unknown";
}

std::optional<Method> method_from_string(std::string_view name) {
  for (const MethodName& entry : kMethodNames) {
    if (name == entry.name) return entry.method;
  }
  return std::nullopt;
}

std::vector<Method> all_methods() {
  std::vector<Method> out;
  for (const MethodName& entry : kMethodNames) out.push_back(entry.method);
  return out;
}

void TrainConfig::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("config: tau must be in [0, 1)");
  if (!(alpha > 0.0)) throw std::invalid_argument("config: alpha must be > 0");
  if (!(eta > 0.0)) throw std::invalid_argument("config: eta must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("config: momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (n_max < 0) throw std::invalid_argument("config: n_max must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("config: temperature must be > 0");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
  if (pretrain_iters_s < 0 || finetune_iters_t < 0) {
    throw std::invalid_argument("config: pretraining iteration counts must be >= 0");
  }
  if (epsilon < 0.0) throw std::invalid_argument("config: epsilon must be >= 0");
}

std::string to_key_value(const TrainConfig& cfg) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::string out;
  out += "method=" + to_string(cfg.method) + "\n";
  out += "tau=" + num(cfg.tau) + "\n";
  out += "alpha=" + num(cfg.alpha) + "\n";
  out += "eta=" + num(cfg.eta) + "\n";
  out += "momentum=" + num(cfg.momentum) + "\n";
  out += "batch-size=" + std::to_string(cfg.batch_size) + "\n";
  out += "n-max=" + std::to_string(cfg.n_max) + "\n";
  out += "temperature=" + num(cfg.temperature) + "\n";
  out += "eval-every=" + std::to_string(cfg.eval_every) + "\n";
  out += "pretrain-iters-s=" + std::to_string(cfg.pretrain_iters_s) + "\n";
  out += "finetune-iters-t=" + std::to_string(cfg.finetune_iters_t) + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  out += std::string("swap-init=") + (cfg.swap_init ? "true" : "false") + "\n";
  out += "epsilon=" + num(cfg.epsilon) + "\n";
  return out;
}

BatchCycler::BatchCycler(int pool_size, std::mt19937_64 rng) : rng_(std::move(rng)) {
  if (pool_size < 1) throw std::invalid_argument("BatchCycler: pool must be non-empty");
  order_.resize(pool_size);
  for (int i = 0; i < pool_size; ++i) order_[i] = i;
  reshuffle();
}

void BatchCycler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<int> BatchCycler::next(int batch_size) {
  std::vector<int> out;
  out.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    if (pos_ == order_.size()) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

std::pair<nn::ModelState, nn::ModelState> init_pair(const datagen::SsdaDataset& ds,
                                                    const TrainConfig& cfg) {
  nn::ModelState source_model = init_source_model(ds, cfg, "");
  nn::ModelState tuned_model = finetune_on_target(source_model, ds, cfg, "");
  if (cfg.swap_init) return {std::move(source_model), std::move(tuned_model)};
  return {std::move(tuned_model), std::move(source_model)};
}

void decota_step(nn::ModelState& model_f, nn::ModelState& model_g,
                 const std::vector<datagen::Sample>& s_batch,
                 const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                 const TrainConfig& cfg, std::mt19937_64& lambda_f, std::mt19937_64& lambda_g,
                 diagnostics::PseudoLabelWindow* window) {
  // Both sets are gated with the weights as they stood at the top of the
  // iteration, before either model updates.
  pseudo::PseudoLabelSet set_f = pseudo::build_pseudo_set(model_g, u_batch.x, cfg.tau, pseudo::TeacherId::g);
  pseudo::PseudoLabelSet set_g = pseudo::build_pseudo_set(model_f, u_batch.x, cfg.tau, pseudo::TeacherId::f);
  record_window(window, u_batch, set_f, &set_g);

  const int k = model_f.num_classes();
  std::vector<mixup::MixedExample> mixed_f = mixup::mix_sets(set_f, t_batch, k, cfg.alpha, lambda_f);
  std::vector<mixup::MixedExample> mixed_g = mixup::mix_sets(set_g, s_batch, k, cfg.alpha, lambda_g);

  nn::Gradients grad_f = supervised_grad(model_f, t_batch);
  if (!mixed_f.empty()) nn::accumulate(grad_f, mixed_grad(model_f, mixed_f));
  nn::Gradients grad_g = supervised_grad(model_g, s_batch);
  if (!mixed_g.empty()) nn::accumulate(grad_g, mixed_grad(model_g, mixed_g));

  nn::sgd_step(model_f, grad_f, cfg.eta, cfg.momentum);
  nn::sgd_step(model_g, grad_g, cfg.eta, cfg.momentum);
}

void mist_step(nn::ModelState& model, const std::vector<datagen::Sample>& s_batch,
               const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
               const TrainConfig& cfg, std::mt19937_64& lambda_rng,
               diagnostics::PseudoLabelWindow* window) {
  pseudo::PseudoLabelSet set = pseudo::build_pseudo_set(model, u_batch.x, cfg.tau, pseudo::TeacherId::self);
  record_window(window, u_batch, set, nullptr);

  const int k = model.num_classes();
  std::vector<mixup::MixedExample> mixed_s = mixup::mix_sets(set, s_batch, k, cfg.alpha, lambda_rng);
  std::vector<mixup::MixedExample> mixed_t = mixup::mix_sets(set, t_batch, k, cfg.alpha, lambda_rng);

  nn::Gradients grad = supervised_grad(model, s_batch);
  nn::accumulate(grad, supervised_grad(model, t_batch));
  if (!mixed_s.empty()) nn::accumulate(grad, mixed_grad(model, mixed_s));
  if (!mixed_t.empty()) nn::accumulate(grad, mixed_grad(model, mixed_t));
  nn::sgd_step(model, grad, cfg.eta, cfg.momentum);
}

void st_pseudo_step(nn::ModelState& model, const std::vector<datagen::Sample>& s_batch,
                    const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                    const TrainConfig& cfg, diagnostics::PseudoLabelWindow* window) {
  pseudo::PseudoLabelSet set = pseudo::build_pseudo_set(model, u_batch.x, cfg.tau, pseudo::TeacherId::self);
  record_window(window, u_batch, set, nullptr);

  // Same four-term structure as mist_step with both mixed sets replaced by
  // the hard pseudo set, so the lambda = 0 limit of mist is this step.
  nn::Gradients grad = supervised_grad(model, s_batch);
  nn::accumulate(grad, supervised_grad(model, t_batch));
  if (!set.empty()) {
    nn::Gradients pg = pseudo_grad(model, set);
    nn::accumulate(grad, pg);
    nn::accumulate(grad, pg);
  }
  nn::sgd_step(model, grad, cfg.eta, cfg.momentum);
}

void two_view_step(nn::ModelState& model_f, nn::ModelState& model_g,
                   const std::vector<datagen::Sample>& s_batch,
                   const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                   const TrainConfig& cfg, std::mt19937_64& lambda_f, std::mt19937_64& lambda_g,
                   diagnostics::PseudoLabelWindow* window) {
  pseudo::PseudoLabelSet set_f = pseudo::build_pseudo_set(model_f, u_batch.x, cfg.tau, pseudo::TeacherId::self);
  pseudo::PseudoLabelSet set_g = pseudo::build_pseudo_set(model_g, u_batch.x, cfg.tau, pseudo::TeacherId::self);
  record_window(window, u_batch, set_f, &set_g);

  const int k = model_f.num_classes();
  std::vector<mixup::MixedExample> mixed_f = mixup::mix_sets(set_f, t_batch, k, cfg.alpha, lambda_f);
  std::vector<mixup::MixedExample> mixed_g = mixup::mix_sets(set_g, s_batch, k, cfg.alpha, lambda_g);

  nn::Gradients grad_f = supervised_grad(model_f, t_batch);
  if (!mixed_f.empty()) nn::accumulate(grad_f, mixed_grad(model_f, mixed_f));
  nn::Gradients grad_g = supervised_grad(model_g, s_batch);
  if (!mixed_g.empty()) nn::accumulate(grad_g, mixed_grad(model_g, mixed_g));

  nn::sgd_step(model_f, grad_f, cfg.eta, cfg.momentum);
  nn::sgd_step(model_g, grad_g, cfg.eta, cfg.momentum);
}

void one_direction_step(TeacherRole teacher, nn::ModelState& model_f, nn::ModelState& model_g,
                        const std::vector<datagen::Sample>& s_batch,
                        const std::vector<datagen::Sample>& t_batch, const UnlabeledBatch& u_batch,
                        const TrainConfig& cfg, std::mt19937_64& lambda_f,
                        std::mt19937_64& lambda_g, diagnostics::PseudoLabelWindow* window) {
  const nn::ModelState& teacher_model = teacher == TeacherRole::f ? model_f : model_g;
  const pseudo::TeacherId id = teacher == TeacherRole::f ? pseudo::TeacherId::f : pseudo::TeacherId::g;
  pseudo::PseudoLabelSet set = pseudo::build_pseudo_set(teacher_model, u_batch.x, cfg.tau, id);
  record_window(window, u_batch, set, nullptr);

  const int k = model_f.num_classes();
  std::vector<mixup::MixedExample> mixed_f = mixup::mix_sets(set, t_batch, k, cfg.alpha, lambda_f);
  std::vector<mixup::MixedExample> mixed_g = mixup::mix_sets(set, s_batch, k, cfg.alpha, lambda_g);

  nn::Gradients grad_f = supervised_grad(model_f, t_batch);
  if (!mixed_f.empty()) nn::accumulate(grad_f, mixed_grad(model_f, mixed_f));
  nn::Gradients grad_g = supervised_grad(model_g, s_batch);
  if (!mixed_g.empty()) nn::accumulate(grad_g, mixed_grad(model_g, mixed_g));

  nn::sgd_step(model_f, grad_f, cfg.eta, cfg.momentum);
  nn::sgd_step(model_g, grad_g, cfg.eta, cfg.momentum);
}

nn::Prediction ensemble_predict(const nn::ModelState& a, const nn::ModelState& b, const Vec& x) {
  nn::ForwardCache ca = nn::forward(a, {x});
  nn::ForwardCache cb = nn::forward(b, {x});
  const Vec& pa = ca.probs[0];
  const Vec& pb = cb.probs[0];
  if (pa.size() != pb.size()) throw std::invalid_argument("ensemble_predict: class counts differ");
  int best = 0;
  double best_p = (pa[0] + pb[0]) / 2.0;
  for (int c = 1; c < static_cast<int>(pa.size()); ++c) {
    const double p = (pa[c] + pb[c]) / 2.0;
    if (p > best_p) {
      best = c;
      best_p = p;
    }
  }
  return {best, best_p};
}

RunResult run(const datagen::SsdaDataset& ds, const TrainConfig& cfg, const RecordSink& sink) {
  cfg.validate();
  if (ds.source_labeled().empty() || ds.target_labeled().empty() || ds.unlabeled().empty() ||
      ds.target_test().empty()) {
    throw std::invalid_argument("run: dataset has an empty pool");
  }

  const auto t_start = std::chrono::steady_clock::now();
  const Method method = cfg.method;

  std::vector<nn::ModelState> models;
  if (method == Method::decota || method == Method::two_view_mist ||
      method == Method::one_direction_f || method == Method::one_direction_g) {
    auto [f, g] = init_pair(ds, cfg);
    models.push_back(std::move(f));
    models.push_back(std::move(g));
  } else if (method == Method::vanilla_ensemble) {
    models.push_back(init_single(ds, cfg, ""));
    models.push_back(init_single(ds, cfg, "b."));
  } else if (method == Method::s_only) {
    models.push_back(init_source_model(ds, cfg, ""));
  } else {
    models.push_back(init_single(ds, cfg, ""));
  }

  BatchCycler cycle_s(static_cast<int>(ds.source_labeled().size()), make_stream(cfg.seed, "cycle.s"));
  BatchCycler cycle_t(static_cast<int>(ds.target_labeled().size()), make_stream(cfg.seed, "cycle.t"));
  BatchCycler cycle_u(ds.num_unlabeled(), make_stream(cfg.seed, "cycle.u"));
  std::mt19937_64 lambda_f = make_stream(cfg.seed, "lambda.f");
  std::mt19937_64 lambda_g = make_stream(cfg.seed, "lambda.g");

  diagnostics::PseudoLabelWindow window;
  RunResult result;
  result.config = cfg;

  const nn::ModelState& slot_f = models.front();
  const nn::ModelState& slot_g = models.back();  // == slot_f for single-model methods
  auto take_snapshot = [&](long long iteration) {
    diagnostics::DiagnosticsRecord rec =
        diagnostics::snapshot(slot_f, slot_g, ds, cfg.tau, cfg.epsilon, iteration, window);
    result.records.push_back(rec);
    if (sink) sink(rec);
  };

  take_snapshot(0);
  for (int n = 1; n <= cfg.n_max; ++n) {
    std::vector<datagen::Sample> s_batch, t_batch;
    s_batch.reserve(cfg.batch_size);
    t_batch.reserve(cfg.batch_size);
    for (int idx : cycle_s.next(cfg.batch_size)) s_batch.push_back(ds.source_labeled()[idx]);
    for (int idx : cycle_t.next(cfg.batch_size)) t_batch.push_back(ds.target_labeled()[idx]);
    UnlabeledBatch u_batch;
    u_batch.pool_index = cycle_u.next(cfg.batch_size);
    u_batch.x.reserve(cfg.batch_size);
    for (int idx : u_batch.pool_index) u_batch.x.push_back(ds.unlabeled()[idx]);

    try {
      switch (method) {
        case Method::decota:
          decota_step(models[0], models[1], s_batch, t_batch, u_batch, cfg, lambda_f, lambda_g, &window);
          break;
        case Method::mist:
          mist_step(models[0], s_batch, t_batch, u_batch, cfg, lambda_f, &window);
          break;
        case Method::st_pseudo:
          st_pseudo_step(models[0], s_batch, t_batch, u_batch, cfg, &window);
          break;
        case Method::two_view_mist:
          two_view_step(models[0], models[1], s_batch, t_batch, u_batch, cfg, lambda_f, lambda_g, &window);
          break;
        case Method::one_direction_f:
          one_direction_step(TeacherRole::f, models[0], models[1], s_batch, t_batch, u_batch, cfg,
                             lambda_f, lambda_g, &window);
          break;
        case Method::one_direction_g:
          one_direction_step(TeacherRole::g, models[0], models[1], s_batch, t_batch, u_batch, cfg,
                             lambda_f, lambda_g, &window);
          break;
        case Method::vanilla_ensemble: {
          // Window events are per item across both models, so the union is
          // recorded here from the pre-step weights and the steps skip it.
          pseudo::PseudoLabelSet set_a =
              pseudo::build_pseudo_set(models[0], u_batch.x, cfg.tau, pseudo::TeacherId::self);
          pseudo::PseudoLabelSet set_b =
              pseudo::build_pseudo_set(models[1], u_batch.x, cfg.tau, pseudo::TeacherId::self);
          record_window(&window, u_batch, set_a, &set_b);
          mist_step(models[0], s_batch, t_batch, u_batch, cfg, lambda_f, nullptr);
          mist_step(models[1], s_batch, t_batch, u_batch, cfg, lambda_g, nullptr);
          break;
        }
        case Method::s_only:
          nn::sgd_step(models[0], supervised_grad(models[0], s_batch), cfg.eta, cfg.momentum);
          break;
        case Method::t_only:
          nn::sgd_step(models[0], supervised_grad(models[0], t_batch), cfg.eta, cfg.momentum);
          break;
        case Method::s_plus_t: {
          nn::Gradients grad = supervised_grad(models[0], s_batch);
          nn::accumulate(grad, supervised_grad(models[0], t_batch));
          nn::sgd_step(models[0], grad, cfg.eta, cfg.momentum);
          break;
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("iteration " + std::to_string(n) + ": " + e.what());
    }

    if (n % cfg.eval_every == 0) take_snapshot(n);
  }
  if (cfg.n_max > 0 && cfg.n_max % cfg.eval_every != 0) take_snapshot(cfg.n_max);

  result.models = std::move(models);
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace ssda::trainer
