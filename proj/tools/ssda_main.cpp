#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ssda/datagen.hpp"
#include "ssda/diagnostics.hpp"
#include "ssda/nn.hpp"
#include "ssda/trainer.hpp"

namespace fs = std::filesystem;
using ssda::Vec;
namespace datagen = ssda::datagen;
namespace diagnostics = ssda::diagnostics;
namespace nn = ssda::nn;
namespace trainer = ssda::trainer;

namespace {

// Relative output paths land under $SSDA_OUT_ROOT when it is set.
fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  const char* root = std::getenv("SSDA_OUT_ROOT");
  if (root != nullptr && *root != '\0' && p.is_relative()) return fs::path(root) / p;
  return p;
}

Vec parse_vector(const std::string& csv) {
  Vec out;
  if (csv.empty()) return out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
      throw CLI::ValidationError("--translate", "malformed number '" + field + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& csv, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
      throw CLI::ValidationError(flag, "malformed number '" + field + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "needs at least one value");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(field.c_str(), &end, 10);
    if (end == field.c_str() || *end != '\0') {
      throw CLI::ValidationError("--seeds", "malformed seed '" + field + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--seeds", "needs at least one seed");
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      if (out[i] == out[j]) throw CLI::ValidationError("--seeds", "seeds must be distinct");
    }
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw std::runtime_error("failed to write " + path.string());
}

struct GenDataOptions {
  std::string out = "dataset";
  std::string kind = "gaussian-mixture";
  int classes = 6;
  int dim = 2;
  double separation = 1.5;
  double noise = 0.55;
  double target_noise = -1.0;  // < 0 means: same as noise
  int source_per_class = 300;
  int target_per_class = 300;
  double rotation = 35.0;
  std::string translate;
  double scale = 1.0;
  std::uint64_t source_seed = 1;
  std::uint64_t target_seed = 2;
  int shots = 3;
  std::uint64_t seed = 0;
};

std::pair<datagen::DomainSpec, datagen::DomainSpec> make_specs(const GenDataOptions& opt) {
  datagen::DomainKind kind;
  if (opt.kind == "gaussian-mixture") {
    kind = datagen::DomainKind::gaussian_mixture;
  } else if (opt.kind == "two-moons") {
    kind = datagen::DomainKind::two_moons;
  } else {
    throw CLI::ValidationError("--kind", "unknown kind '" + opt.kind + "'");
  }

  datagen::DomainSpec source;
  source.kind = kind;
  source.num_classes = opt.classes;
  source.input_dim = opt.dim;
  source.class_separation = opt.separation;
  source.noise_sigma = opt.noise;
  source.samples_per_class = opt.source_per_class;
  source.seed = opt.source_seed;

  datagen::DomainSpec target = source;
  target.samples_per_class = opt.target_per_class;
  target.seed = opt.target_seed;
  if (opt.target_noise >= 0.0) target.noise_sigma = opt.target_noise;
  target.shift.rotation_degrees = opt.rotation;
  target.shift.translation = parse_vector(opt.translate);
  target.shift.scale = opt.scale;
  return {source, target};
}

int cmd_gen_data(const GenDataOptions& opt) {
  auto [source, target] = make_specs(opt);
  datagen::SsdaDataset ds = datagen::generate(source, target, opt.shots, opt.seed);
  fs::path prefix = resolve_out(opt.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  datagen::save_csv(ds, prefix.string() + ".csv");
  datagen::save_spec_file(source, target, opt.shots, opt.seed, prefix.string() + ".spec");
  std::cout << "wrote " << prefix.string() << ".csv (" << ds.source_labeled().size() << " S, "
            << ds.target_labeled().size() << " T, " << ds.num_unlabeled() << " U, "
            << ds.target_test().size() << " test)\n";
  return 0;
}

// Plain key=value config file for train; keys match the long flag names and
// a flag given on the command line always wins over the file.
void apply_config_file(const std::string& path, CLI::App* cmd, trainer::TrainConfig& cfg,
                       std::string& method_name) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);

  auto parse_double = [](const std::string& key, const std::string& value) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
      throw CLI::ValidationError("--config", "malformed value for '" + key + "': " + value);
    }
    return v;
  };
  auto parse_int = [](const std::string& key, const std::string& value) {
    char* end = nullptr;
    long v = std::strtol(value.c_str(), &end, 10);
    if (end == value.c_str() || *end != '\0') {
      throw CLI::ValidationError("--config", "malformed value for '" + key + "': " + value);
    }
    return static_cast<int>(v);
  };

  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (cmd->count("--" + key) > 0) continue;  // explicit flag wins

    if (key == "method") {
      method_name = value;
    } else if (key == "tau") {
      cfg.tau = parse_double(key, value);
    } else if (key == "alpha") {
      cfg.alpha = parse_double(key, value);
    } else if (key == "eta") {
      cfg.eta = parse_double(key, value);
    } else if (key == "momentum") {
      cfg.momentum = parse_double(key, value);
    } else if (key == "batch-size") {
      cfg.batch_size = parse_int(key, value);
    } else if (key == "n-max") {
      cfg.n_max = parse_int(key, value);
    } else if (key == "temperature") {
      cfg.temperature = parse_double(key, value);
    } else if (key == "eval-every") {
      cfg.eval_every = parse_int(key, value);
    } else if (key == "pretrain-iters-s") {
      cfg.pretrain_iters_s = parse_int(key, value);
    } else if (key == "finetune-iters-t") {
      cfg.finetune_iters_t = parse_int(key, value);
    } else if (key == "seed") {
      char* end = nullptr;
      cfg.seed = std::strtoull(value.c_str(), &end, 10);
      if (end == value.c_str() || *end != '\0') {
        throw CLI::ValidationError("--config", "malformed value for 'seed': " + value);
      }
    } else if (key == "swap-init") {
      if (value == "true" || value == "1") {
        cfg.swap_init = true;
      } else if (value == "false" || value == "0") {
        cfg.swap_init = false;
      } else {
        throw CLI::ValidationError("--config", "malformed value for 'swap-init': " + value);
      }
    } else if (key == "epsilon") {
      cfg.epsilon = parse_double(key, value);
    } else {
      throw CLI::ValidationError("--config", "unknown key '" + key + "'");
    }
  }
}

void add_config_flags(CLI::App* cmd, trainer::TrainConfig& cfg, std::string& method_name) {
  cmd->add_option("--method", method_name, "training method")->capture_default_str();
  cmd->add_option("--tau", cfg.tau, "confidence threshold for pseudo-labels")->capture_default_str();
  cmd->add_option("--alpha", cfg.alpha, "beta distribution coefficient")->capture_default_str();
  cmd->add_option("--eta", cfg.eta, "learning rate")->capture_default_str();
  cmd->add_option("--momentum", cfg.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size per pool")->capture_default_str();
  cmd->add_option("--n-max", cfg.n_max, "training iterations")->capture_default_str();
  cmd->add_option("--temperature", cfg.temperature, "cosine head temperature")->capture_default_str();
  cmd->add_option("--eval-every", cfg.eval_every, "iterations between diagnostics records")->capture_default_str();
  cmd->add_option("--pretrain-iters-s", cfg.pretrain_iters_s, "source pretraining iterations")->capture_default_str();
  cmd->add_option("--finetune-iters-t", cfg.finetune_iters_t, "target fine-tuning iterations")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "root seed for all run randomness")->capture_default_str();
  cmd->add_flag("--swap-init", cfg.swap_init, "swap which init goes to which task");
  cmd->add_option("--epsilon", cfg.epsilon, "expandability threshold recorded by diagnostics")->capture_default_str();
}

trainer::TrainConfig finalize_config(trainer::TrainConfig cfg, const std::string& method_name) {
  auto method = trainer::method_from_string(method_name);
  if (!method) throw CLI::ValidationError("--method", "unknown method '" + method_name + "'");
  cfg.method = *method;
  cfg.validate();
  return cfg;
}

int cmd_train(const std::string& dataset_path, const trainer::TrainConfig& cfg,
              const std::string& out_dir) {
  datagen::SsdaDataset ds = datagen::load_csv(dataset_path);
  fs::path dir = resolve_out(out_dir);
  fs::create_directories(dir);

  write_file(dir / "config.txt", trainer::to_key_value(cfg));

  std::ofstream jsonl(dir / "metrics.jsonl", std::ios::binary);
  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!jsonl || !csv) throw std::runtime_error("cannot open metric streams under " + dir.string());
  csv << diagnostics::csv_header() << '\n' << std::flush;

  auto sink = [&](const diagnostics::DiagnosticsRecord& rec) {
    jsonl << diagnostics::to_jsonl(rec) << '\n' << std::flush;
    csv << diagnostics::to_csv_row(rec) << '\n' << std::flush;
  };

  trainer::RunResult result = trainer::run(ds, cfg, sink);

  if (result.models.size() == 2) {
    nn::save_checkpoint(result.models[0], (dir / "model_f.txt").string());
    nn::save_checkpoint(result.models[1], (dir / "model_g.txt").string());
  } else {
    nn::save_checkpoint(result.models[0], (dir / "model.txt").string());
  }

  const diagnostics::DiagnosticsRecord& last = result.records.back();
  std::printf("done: %lld iterations, acc_f %.4f acc_g %.4f ensemble %.4f (%.1fs)\n",
              last.iteration, last.acc_f, last.acc_g, last.acc_ensemble, result.wall_time_seconds);
  return 0;
}

struct Cell {
  std::string key;
  trainer::TrainConfig cfg;
};

// Runs cells in parallel (up to `jobs` threads); results land in cell order
// so every downstream reduction is deterministic.
std::vector<trainer::RunResult> run_cells(const datagen::SsdaDataset& ds, const std::vector<Cell>& cells,
                                          int jobs, const fs::path& cells_dir) {
  fs::create_directories(cells_dir);
  std::vector<trainer::RunResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        std::ofstream stream(cells_dir / (cells[i].key + ".jsonl"), std::ios::binary);
        auto sink = [&stream](const diagnostics::DiagnosticsRecord& rec) {
          stream << diagnostics::to_jsonl(rec) << '\n' << std::flush;
        };
        results[i] = trainer::run(ds, cells[i].cfg, sink);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw std::runtime_error("cell " + cells[i].key + ": " + e.what());
      }
    }
  }
  return results;
}

std::string format_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long long total_pseudo(const trainer::RunResult& r, bool correct_only) {
  long long total = 0;
  for (const diagnostics::DiagnosticsRecord& rec : r.records) {
    total += correct_only ? rec.pseudo_correct_window : rec.pseudo_count_window;
  }
  return total;
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

int cmd_sweep(const std::string& dataset_path, const std::string& param,
              const std::string& values_csv, const std::string& seeds_csv,
              trainer::TrainConfig base, const std::string& out_dir, int jobs) {
  if (param != "tau" && param != "alpha") {
    throw CLI::ValidationError("--param", "must be 'tau' or 'alpha'");
  }
  std::vector<double> values = parse_doubles(values_csv, "--values");
  std::vector<std::uint64_t> seeds = parse_seeds(seeds_csv);
  datagen::SsdaDataset ds = datagen::load_csv(dataset_path);

  std::vector<Cell> cells;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      trainer::TrainConfig cfg = base;
      if (param == "tau") {
        cfg.tau = v;
      } else {
        cfg.alpha = v;
      }
      cfg.seed = seed;
      cfg.validate();
      cells.push_back({param + format_num(v) + "_seed" + std::to_string(seed), cfg});
    }
  }

  fs::path dir = resolve_out(out_dir);
  fs::create_directories(dir);
  std::vector<trainer::RunResult> results = run_cells(ds, cells, jobs, dir / "cells");

  std::string out =
      "row,param,value,seed,acc_f,acc_g,acc_ensemble,pseudo_count_total,pseudo_correct_total,"
      "mean_acc_ensemble,std_acc_ensemble\n";
  std::size_t i = 0;
  for (double v : values) {
    std::vector<double> accs;
    for (std::uint64_t seed : seeds) {
      const trainer::RunResult& r = results[i];
      const diagnostics::DiagnosticsRecord& last = r.records.back();
      out += "cell," + param + "," + format_num(v) + "," + std::to_string(seed) + "," +
             format_num(last.acc_f) + "," + format_num(last.acc_g) + "," +
             format_num(last.acc_ensemble) + "," + std::to_string(total_pseudo(r, false)) + "," +
             std::to_string(total_pseudo(r, true)) + ",,\n";
      accs.push_back(last.acc_ensemble);
      ++i;
    }

    Stats s = mean_std(accs);
    out += "summary," + param + "," + format_num(v) + ",,,,,,," + format_num(s.mean) + "," +
           format_num(s.stddev) + "\n";
  }
  write_file(dir / "summary.csv", out);
  std::cout << "wrote " << (dir / "summary.csv").string() << " (" << cells.size() << " cells)\n";
  return 0;
}

int cmd_compare(const std::string& dataset_path, const std::string& methods_csv,
                const std::string& seeds_csv, const std::string& baseline_name,
                trainer::TrainConfig base, const std::string& out_dir, int jobs) {
  std::vector<std::string> method_names;
  {
    std::stringstream ss(methods_csv);
    std::string field;
    while (std::getline(ss, field, ',')) method_names.push_back(field);
  }
  if (method_names.empty()) throw CLI::ValidationError("--methods", "needs at least one method");
  std::vector<trainer::Method> methods;
  for (const std::string& name : method_names) {
    auto m = trainer::method_from_string(name);
    if (!m) throw CLI::ValidationError("--methods", "unknown method '" + name + "'");
    methods.push_back(*m);
  }
  auto baseline = trainer::method_from_string(baseline_name);
  if (!baseline) throw CLI::ValidationError("--baseline", "unknown method '" + baseline_name + "'");
  std::vector<std::uint64_t> seeds = parse_seeds(seeds_csv);
  datagen::SsdaDataset ds = datagen::load_csv(dataset_path);

  // Each distinct method runs once per seed; the baseline is always included.
  std::vector<trainer::Method> to_run;
  for (trainer::Method m : methods) {
    if (std::find(to_run.begin(), to_run.end(), m) == to_run.end()) to_run.push_back(m);
  }
  if (std::find(to_run.begin(), to_run.end(), *baseline) == to_run.end()) to_run.push_back(*baseline);

  std::vector<Cell> cells;
  for (trainer::Method m : to_run) {
    for (std::uint64_t seed : seeds) {
      trainer::TrainConfig cfg = base;
      cfg.method = m;
      cfg.seed = seed;
      cfg.validate();
      cells.push_back({trainer::to_string(m) + "_seed" + std::to_string(seed), cfg});
    }
  }

  fs::path dir = resolve_out(out_dir);
  fs::create_directories(dir);
  std::vector<trainer::RunResult> results = run_cells(ds, cells, jobs, dir / "cells");

  auto final_acc = [&](std::size_t method_idx, std::size_t seed_idx) {
    return results[method_idx * seeds.size() + seed_idx].records.back().acc_ensemble;
  };
  const std::size_t baseline_idx =
      std::find(to_run.begin(), to_run.end(), *baseline) - to_run.begin();

  std::string out = "row,method,seed,acc_f,acc_g,acc_ensemble,mean_acc_ensemble,std_acc_ensemble,"
                    "wins_vs_baseline,ties_vs_baseline,losses_vs_baseline\n";
  std::printf("%-18s %-16s  vs %s\n", "method", "mean+/-std", baseline_name.c_str());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const std::size_t run_idx = std::find(to_run.begin(), to_run.end(), methods[mi]) - to_run.begin();
    std::vector<double> accs;
    int wins = 0, ties = 0, losses = 0;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const trainer::RunResult& r = results[run_idx * seeds.size() + si];
      const diagnostics::DiagnosticsRecord& last = r.records.back();
      const double acc = last.acc_ensemble;
      const double base_acc = final_acc(baseline_idx, si);
      if (acc > base_acc) {
        ++wins;
      } else if (acc == base_acc) {
        ++ties;
      } else {
        ++losses;
      }
      accs.push_back(acc);
      out += "cell," + method_names[mi] + "," + std::to_string(seeds[si]) + "," +
             format_num(last.acc_f) + "," + format_num(last.acc_g) + "," + format_num(acc) +
             ",,,,,\n";
    }
    Stats s = mean_std(accs);
    out += "summary," + method_names[mi] + ",,,,," + format_num(s.mean) + "," + format_num(s.stddev) +
           "," + std::to_string(wins) + "," + std::to_string(ties) + "," + std::to_string(losses) + "\n";
    std::printf("%-18s %.4f +/- %.4f  %d wins / %d ties / %d losses\n", method_names[mi].c_str(),
                s.mean, s.stddev, wins, ties, losses);
  }
  write_file(dir / "ranking.csv", out);
  std::cout << "wrote " << (dir / "ranking.csv").string() << "\n";
  return 0;
}

int cmd_diagnose(const std::string& dataset_path, const std::string& model_f_path,
                 const std::string& model_g_path, double tau, double epsilon,
                 const std::string& out_file) {
  datagen::SsdaDataset ds = datagen::load_csv(dataset_path);
  nn::ModelState model_f = nn::load_checkpoint(model_f_path);
  nn::ModelState model_g = model_g_path.empty() ? model_f : nn::load_checkpoint(model_g_path);

  diagnostics::PseudoLabelWindow window;
  diagnostics::DiagnosticsRecord rec = diagnostics::snapshot(model_f, model_g, ds, tau, epsilon, 0, window);
  const std::string line = diagnostics::to_jsonl(rec);
  std::cout << line << "\n";
  if (!out_file.empty()) write_file(resolve_out(out_file), line + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale semi-supervised domain adaptation experiments"};
  app.require_subcommand(1);

  GenDataOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic benchmark dataset");
  cmd_gen->add_option("--out", gen.out, "output prefix (writes <out>.csv and <out>.spec)")->capture_default_str();
  cmd_gen->add_option("--kind", gen.kind, "gaussian-mixture or two-moons")->capture_default_str();
  cmd_gen->add_option("--classes", gen.classes, "number of classes")->capture_default_str();
  cmd_gen->add_option("--dim", gen.dim, "input dimension")->capture_default_str();
  cmd_gen->add_option("--separation", gen.separation, "class separation radius")->capture_default_str();
  cmd_gen->add_option("--noise", gen.noise, "per-coordinate noise sigma")->capture_default_str();
  cmd_gen->add_option("--target-noise", gen.target_noise, "target noise sigma (defaults to --noise)");
  cmd_gen->add_option("--source-per-class", gen.source_per_class, "source samples per class")->capture_default_str();
  cmd_gen->add_option("--target-per-class", gen.target_per_class, "target samples per class")->capture_default_str();
  cmd_gen->add_option("--rotation", gen.rotation, "target rotation in degrees")->capture_default_str();
  cmd_gen->add_option("--translate", gen.translate, "target translation, comma-separated");
  cmd_gen->add_option("--scale", gen.scale, "target scale factor")->capture_default_str();
  cmd_gen->add_option("--source-seed", gen.source_seed, "source pool seed")->capture_default_str();
  cmd_gen->add_option("--target-seed", gen.target_seed, "target pool seed")->capture_default_str();
  cmd_gen->add_option("--shots", gen.shots, "labeled target samples per class")->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed, "split-selection seed")->capture_default_str();

  std::string train_dataset, train_out = "run", train_method = "decota", train_config_path;
  trainer::TrainConfig train_cfg;
  CLI::App* cmd_tr = app.add_subcommand("train", "train one method on a dataset");
  cmd_tr->add_option("--dataset", train_dataset, "dataset CSV path")->required();
  cmd_tr->add_option("--out", train_out, "output directory")->capture_default_str();
  cmd_tr->add_option("--config", train_config_path, "key=value config file; flags override it");
  add_config_flags(cmd_tr, train_cfg, train_method);

  std::string sweep_dataset, sweep_param = "tau", sweep_values, sweep_seeds = "0,1,2,3,4";
  std::string sweep_out = "sweep", sweep_method = "decota";
  int sweep_jobs = 1;
  trainer::TrainConfig sweep_cfg;
  CLI::App* cmd_sw = app.add_subcommand("sweep", "grid over tau or alpha, times seeds");
  cmd_sw->add_option("--dataset", sweep_dataset, "dataset CSV path")->required();
  cmd_sw->add_option("--param", sweep_param, "tau or alpha")->capture_default_str();
  cmd_sw->add_option("--values", sweep_values, "comma-separated grid values")->required();
  cmd_sw->add_option("--seeds", sweep_seeds, "comma-separated seeds")->capture_default_str();
  cmd_sw->add_option("--out", sweep_out, "output directory")->capture_default_str();
  cmd_sw->add_option("--jobs", sweep_jobs, "parallel cells")->capture_default_str();
  add_config_flags(cmd_sw, sweep_cfg, sweep_method);

  std::string cmp_dataset, cmp_methods, cmp_seeds = "0,1,2,3,4", cmp_baseline = "s_plus_t";
  std::string cmp_out = "compare", cmp_method_unused = "decota";
  int cmp_jobs = 1;
  trainer::TrainConfig cmp_cfg;
  CLI::App* cmd_cmp = app.add_subcommand("compare", "multi-seed method comparison");
  cmd_cmp->add_option("--dataset", cmp_dataset, "dataset CSV path")->required();
  cmd_cmp->add_option("--methods", cmp_methods, "comma-separated methods")->required();
  cmd_cmp->add_option("--seeds", cmp_seeds, "comma-separated seeds")->capture_default_str();
  cmd_cmp->add_option("--baseline", cmp_baseline, "baseline method for win/loss counts")->capture_default_str();
  cmd_cmp->add_option("--out", cmp_out, "output directory")->capture_default_str();
  cmd_cmp->add_option("--jobs", cmp_jobs, "parallel cells")->capture_default_str();
  add_config_flags(cmd_cmp, cmp_cfg, cmp_method_unused);

  std::string diag_dataset, diag_model_f, diag_model_g, diag_out;
  double diag_tau = 0.5, diag_epsilon = 2.0;
  CLI::App* cmd_dg = app.add_subcommand("diagnose", "recompute a diagnostics record from checkpoints");
  cmd_dg->add_option("--dataset", diag_dataset, "dataset CSV path")->required();
  cmd_dg->add_option("--model-f", diag_model_f, "target-task checkpoint")->required();
  cmd_dg->add_option("--model-g", diag_model_g, "source-task checkpoint (defaults to model-f)");
  cmd_dg->add_option("--tau", diag_tau, "confidence threshold")->capture_default_str();
  cmd_dg->add_option("--epsilon", diag_epsilon, "expandability threshold")->capture_default_str();
  cmd_dg->add_option("--out", diag_out, "also write the record to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_gen->parsed()) return cmd_gen_data(gen);
    if (cmd_tr->parsed()) {
      if (!train_config_path.empty()) {
        apply_config_file(train_config_path, cmd_tr, train_cfg, train_method);
      }
      return cmd_train(train_dataset, finalize_config(train_cfg, train_method), train_out);
    }
    if (cmd_sw->parsed()) {
      return cmd_sweep(sweep_dataset, sweep_param, sweep_values, sweep_seeds,
                       finalize_config(sweep_cfg, sweep_method), sweep_out, sweep_jobs);
    }
    if (cmd_cmp->parsed()) {
      return cmd_compare(cmp_dataset, cmp_methods, cmp_seeds, cmp_baseline,
                         finalize_config(cmp_cfg, cmp_method_unused), cmp_out, cmp_jobs);
    }
    if (cmd_dg->parsed()) {
      return cmd_diagnose(diag_dataset, diag_model_f, diag_model_g, diag_tau, diag_epsilon, diag_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
