#include "ssda/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "ssda/pseudo.hpp"
#include "ssda/trainer.hpp"

namespace ssda::diagnostics {

namespace {

void format_double(std::string& out, double v) {
  if (std::isinf(v)) {
    out += "inf";
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

int confidence_indicator(const nn::ModelState& model, const Vec& u, double tau) {
  nn::ForwardCache cache = nn::forward(model, {u});
  return pseudo::gate(cache.probs[0], tau).has_value() ? 1 : 0;
}

HCounts aggregate(const std::vector<std::uint8_t>& indicators_t,
                  const std::vector<std::uint8_t>& indicators_s) {
  if (indicators_t.size() != indicators_s.size()) {
    throw std::invalid_argument("aggregate: indicator vectors differ in length");
  }
  HCounts counts;
  for (std::size_t i = 0; i < indicators_t.size(); ++i) {
    const int t = indicators_t[i] ? 1 : 0;
    const int s = indicators_s[i] ? 1 : 0;
    counts.both += t * s;
    counts.one += t * (1 - s) + (1 - t) * s;
    counts.none += (1 - t) * (1 - s);
  }
  return counts;
}

bool expandability(long long h_both, long long h_one, long long h_none, double epsilon) {
  return static_cast<double>(h_one) >= epsilon * static_cast<double>(std::min(h_both, h_none));
}

double epsilon_max(long long h_both, long long h_one, long long h_none) {
  const long long m = std::min(h_both, h_none);
  if (m == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(h_one) / static_cast<double>(m);
}

double accuracy(const nn::ModelState& model, const std::vector<datagen::Sample>& samples) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const datagen::Sample& s : samples) {
    if (nn::predict(model, s.x).label == s.y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double ensemble_accuracy(const nn::ModelState& model_f, const nn::ModelState& model_g,
                         const std::vector<datagen::Sample>& samples) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const datagen::Sample& s : samples) {
    if (trainer::ensemble_predict(model_f, model_g, s.x).label == s.y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

DiagnosticsRecord snapshot(const nn::ModelState& model_f, const nn::ModelState& model_g,
                           const datagen::SsdaDataset& ds, double tau, double epsilon,
                           long long iteration, PseudoLabelWindow& window) {
  DiagnosticsRecord rec;
  rec.iteration = iteration;
  rec.acc_f = accuracy(model_f, ds.target_test());
  rec.acc_g = accuracy(model_g, ds.target_test());
  rec.acc_ensemble = ensemble_accuracy(model_f, model_g, ds.target_test());
  rec.acc_source_test = ensemble_accuracy(model_f, model_g, ds.source_labeled());

  const std::vector<Vec>& pool = ds.unlabeled();
  std::vector<std::uint8_t> ind_t(pool.size()), ind_s(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ind_t[i] = static_cast<std::uint8_t>(confidence_indicator(model_f, pool[i], tau));
    ind_s[i] = static_cast<std::uint8_t>(confidence_indicator(model_g, pool[i], tau));
  }
  HCounts counts = aggregate(ind_t, ind_s);
  rec.h_both = counts.both;
  rec.h_one = counts.one;
  rec.h_none = counts.none;
  rec.epsilon_holds = expandability(counts.both, counts.one, counts.none, epsilon);
  rec.epsilon_max = epsilon_max(counts.both, counts.one, counts.none);

  datagen::SsdaDataset::EvalView view = ds.evaluation_view();
  rec.pseudo_count_window = static_cast<long long>(window.events.size());
  for (const PseudoLabelWindow::Event& ev : window.events) {
    const int truth = view.hidden_label(ev.pool_index);
    for (int j = 0; j < ev.n_labels; ++j) {
      if (ev.labels[j] == truth) {
        ++rec.pseudo_correct_window;
        break;
      }
    }
  }
  window.clear();
  return rec;
}

std::string csv_header() {
  return "iteration,acc_f,acc_g,acc_ensemble,acc_source_test,h_both,h_one,h_none,"
         "epsilon_holds,epsilon_max,pseudo_count_window,pseudo_correct_window";
}

std::string to_csv_row(const DiagnosticsRecord& rec) {
  std::string out = std::to_string(rec.iteration);
  for (double v : {rec.acc_f, rec.acc_g, rec.acc_ensemble, rec.acc_source_test}) {
    out += ',';
    format_double(out, v);
  }
  out += ',' + std::to_string(rec.h_both);
  out += ',' + std::to_string(rec.h_one);
  out += ',' + std::to_string(rec.h_none);
  out += rec.epsilon_holds ? ",1" : ",0";
  out += ',';
  format_double(out, rec.epsilon_max);
  out += ',' + std::to_string(rec.pseudo_count_window);
  out += ',' + std::to_string(rec.pseudo_correct_window);
  return out;
}

std::string to_jsonl(const DiagnosticsRecord& rec) {
  std::string out = "{\"iteration\":" + std::to_string(rec.iteration);
  auto field = [&out](const char* name, double v) {
    out += std::string(",\"") + name + "\":";
    if (std::isinf(v)) {
      out += "\"inf\"";
    } else {
      format_double(out, v);
    }
  };
  field("acc_f", rec.acc_f);
  field("acc_g", rec.acc_g);
  field("acc_ensemble", rec.acc_ensemble);
  field("acc_source_test", rec.acc_source_test);
  out += ",\"h_both\":" + std::to_string(rec.h_both);
  out += ",\"h_one\":" + std::to_string(rec.h_one);
  out += ",\"h_none\":" + std::to_string(rec.h_none);
  out += std::string(",\"epsilon_holds\":") + (rec.epsilon_holds ? "true" : "false");
  field("epsilon_max", rec.epsilon_max);
  out += ",\"pseudo_count_window\":" + std::to_string(rec.pseudo_count_window);
  out += ",\"pseudo_correct_window\":" + std::to_string(rec.pseudo_correct_window);
  out += "}";
  return out;
}

}  // namespace ssda::diagnostics
