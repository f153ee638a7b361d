#include "ssda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ssda/rng.hpp"

namespace ssda::datagen {

namespace {

constexpr const char* kSplitSource = "S";
constexpr const char* kSplitTarget = "T";
constexpr const char* kSplitUnlabeled = "U";
constexpr const char* kSplitTest = "test";

Vec apply_shift(const ShiftSpec& shift, Vec p) {
  const double theta = shift.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  if (p.size() >= 2) {
    const double x0 = p[0], x1 = p[1];
    p[0] = c * x0 - s * x1;
    p[1] = s * x0 + c * x1;
  }
  for (double& v : p) v *= shift.scale;
  if (!shift.translation.empty()) {
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += shift.translation[j];
  }
  return p;
}

// Class means sit on a circle of radius class_separation in the plane of the
// first two coordinates.
Vec gaussian_mean(const DomainSpec& spec, int k) {
  Vec mean(spec.input_dim, 0.0);
  const double angle = 2.0 * std::numbers::pi * k / spec.num_classes;
  mean[0] = spec.class_separation * std::cos(angle);
  mean[1] = spec.class_separation * std::sin(angle);
  return mean;
}

// The classic pair of interleaved half circles, scaled by class_separation.
Vec moon_point(const DomainSpec& spec, int k, double t) {
  const double r = spec.class_separation;
  Vec p(2);
  if (k == 0) {
    p[0] = r * std::cos(t);
    p[1] = r * std::sin(t);
  } else {
    p[0] = r - r * std::cos(t);
    p[1] = r / 2.0 - r * std::sin(t);
  }
  return p;
}

std::vector<Sample> draw_domain(const DomainSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> arc(0.0, std::numbers::pi);

  std::vector<Sample> pool;
  pool.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      Vec base;
      if (spec.kind == DomainKind::two_moons) {
        base = moon_point(spec, k, arc(rng));
      } else {
        base = gaussian_mean(spec, k);
      }
      Vec x = apply_shift(spec.shift, std::move(base));
      for (double& v : x) v += spec.noise_sigma * gauss(rng);
      pool.push_back({std::move(x), k});
    }
  }
  return pool;
}

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string to_string(DomainKind kind) {
  return kind == DomainKind::two_moons ? "two-moons" : "gaussian-mixture";
}

void DomainSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("domain spec: num_classes must be >= 2");
  if (input_dim < 2) throw std::invalid_argument("domain spec: input_dim must be >= 2");
  if (samples_per_class < 1) throw std::invalid_argument("domain spec: samples_per_class must be >= 1");
  if (!(class_separation > 0.0)) throw std::invalid_argument("domain spec: class_separation must be > 0");
  if (noise_sigma < 0.0) throw std::invalid_argument("domain spec: noise_sigma must be >= 0");
  if (!(shift.scale > 0.0)) throw std::invalid_argument("domain spec: shift scale must be > 0");
  if (!shift.translation.empty() && static_cast<int>(shift.translation.size()) != input_dim) {
    throw std::invalid_argument("domain spec: translation length must equal input_dim");
  }
  if (kind == DomainKind::two_moons && (num_classes != 2 || input_dim != 2)) {
    throw std::invalid_argument("domain spec: two-moons requires num_classes = 2 and input_dim = 2");
  }
}

SsdaDataset::SsdaDataset(std::vector<Sample> source_labeled, std::vector<Sample> target_labeled,
                         std::vector<Sample> target_unlabeled, std::vector<Sample> target_test,
                         int num_classes, int input_dim, int shots)
    : source_labeled_(std::move(source_labeled)),
      target_labeled_(std::move(target_labeled)),
      target_test_(std::move(target_test)),
      num_classes_(num_classes),
      input_dim_(input_dim),
      shots_(shots) {
  unlabeled_x_.reserve(target_unlabeled.size());
  unlabeled_hidden_y_.reserve(target_unlabeled.size());
  for (Sample& s : target_unlabeled) {
    unlabeled_x_.push_back(std::move(s.x));
    unlabeled_hidden_y_.push_back(s.y);
  }
}

int SsdaDataset::EvalView::hidden_label(int unlabeled_index) const {
  return ds_->unlabeled_hidden_y_.at(unlabeled_index);
}

SsdaDataset generate(const DomainSpec& source, const DomainSpec& target, int shots,
                     std::uint64_t seed) {
  source.validate();
  target.validate();
  if (shots < 1) throw std::invalid_argument("generate: shots must be >= 1");
  if (source.num_classes != target.num_classes || source.input_dim != target.input_dim) {
    throw std::invalid_argument("generate: source and target specs disagree on num_classes or input_dim");
  }
  if (target.samples_per_class <= shots) {
    throw std::invalid_argument("generate: insufficient target samples per class (need more than shots=" +
                                std::to_string(shots) + ", have " +
                                std::to_string(target.samples_per_class) + ")");
  }

  std::vector<Sample> source_pool = draw_domain(source);
  std::vector<Sample> target_pool = draw_domain(target);
  const int k = target.num_classes;

  std::vector<Sample> labeled, leftovers;
  std::mt19937_64 rng_lab = make_stream(seed, "split.labeled");
  for (int c = 0; c < k; ++c) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(target_pool.size()); ++i) {
      if (target_pool[i].y == c) idx.push_back(i);
    }
    std::shuffle(idx.begin(), idx.end(), rng_lab);
    for (int j = 0; j < shots; ++j) labeled.push_back(target_pool[idx[j]]);
    for (std::size_t j = shots; j < idx.size(); ++j) leftovers.push_back(target_pool[idx[j]]);
  }

  std::mt19937_64 rng_ut = make_stream(seed, "split.unlabeled_test");
  std::shuffle(leftovers.begin(), leftovers.end(), rng_ut);
  const std::size_t n_unlabeled = leftovers.size() * 4 / 5;
  const std::size_t n_test = leftovers.size() - n_unlabeled;
  if (n_unlabeled == 0 || n_test == 0) {
    throw std::invalid_argument("generate: insufficient target samples to form unlabeled and test splits");
  }
  std::vector<Sample> unlabeled(leftovers.begin(), leftovers.begin() + n_unlabeled);
  std::vector<Sample> test(leftovers.begin() + n_unlabeled, leftovers.end());

  return SsdaDataset(std::move(source_pool), std::move(labeled), std::move(unlabeled),
                     std::move(test), k, target.input_dim, shots);
}

void save_csv(const SsdaDataset& ds, const std::string& path) {
  std::string out = "split,y";
  for (int j = 0; j < ds.input_dim(); ++j) out += ",x_" + std::to_string(j);
  out += '\n';

  auto write_row = [&out](const char* split, int y, const Vec& x) {
    out += split;
    out += ',';
    out += std::to_string(y);
    for (double v : x) {
      out += ',';
      format_double(out, v);
    }
    out += '\n';
  };
  for (const Sample& s : ds.source_labeled()) write_row(kSplitSource, s.y, s.x);
  for (const Sample& s : ds.target_labeled()) write_row(kSplitTarget, s.y, s.x);
  SsdaDataset::EvalView view = ds.evaluation_view();
  for (int i = 0; i < ds.num_unlabeled(); ++i) write_row(kSplitUnlabeled, view.hidden_label(i), ds.unlabeled()[i]);
  for (const Sample& s : ds.target_test()) write_row(kSplitTest, s.y, s.x);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << out;
  if (!f) throw std::runtime_error("failed to write " + path);
}

SsdaDataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);

  auto fail = [&path](int line, const std::string& msg) -> std::runtime_error {
    return std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
  };

  std::string line;
  if (!std::getline(f, line) || line.empty()) throw std::runtime_error(path + ": no header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  if (header.size() < 3 || header[0] != "split" || header[1] != "y") {
    throw fail(1, "malformed header (expected split,y,x_0,...)");
  }
  const int d = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < d; ++j) {
    if (header[j + 2] != "x_" + std::to_string(j)) throw fail(1, "malformed header column " + header[j + 2]);
  }

  std::vector<Sample> source, labeled, unlabeled, test;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (static_cast<int>(fields.size()) != d + 2) {
      throw fail(line_no, "expected " + std::to_string(d + 2) + " columns, got " + std::to_string(fields.size()));
    }

    char* end = nullptr;
    long y = std::strtol(fields[1].c_str(), &end, 10);
    if (end == fields[1].c_str() || *end != '\0' || y < 0) throw fail(line_no, "malformed class index '" + fields[1] + "'");

    Sample s;
    s.y = static_cast<int>(y);
    s.x.resize(d);
    for (int j = 0; j < d; ++j) {
      const std::string& v = fields[j + 2];
      s.x[j] = std::strtod(v.c_str(), &end);
      if (end == v.c_str() || *end != '\0') throw fail(line_no, "malformed value '" + v + "'");
    }

    const std::string& split = fields[0];
    if (split == kSplitSource) {
      source.push_back(std::move(s));
    } else if (split == kSplitTarget) {
      labeled.push_back(std::move(s));
    } else if (split == kSplitUnlabeled) {
      unlabeled.push_back(std::move(s));
    } else if (split == kSplitTest) {
      test.push_back(std::move(s));
    } else {
      throw fail(line_no, "unknown split tag '" + split + "'");
    }
  }

  int max_y = -1;
  for (const auto* pool : {&source, &labeled, &unlabeled, &test}) {
    for (const Sample& s : *pool) max_y = std::max(max_y, s.y);
  }
  const int k = max_y + 1;
  if (k < 2) throw std::runtime_error(path + ": fewer than two classes present");
  if (labeled.empty()) throw std::runtime_error(path + ": no target-labeled rows");

  std::vector<int> counts(k, 0);
  for (const Sample& s : labeled) ++counts[s.y];
  for (int c = 1; c < k; ++c) {
    if (counts[c] != counts[0]) {
      throw std::runtime_error(path + ": target-labeled class counts are not uniform");
    }
  }
  return SsdaDataset(std::move(source), std::move(labeled), std::move(unlabeled), std::move(test),
                     k, d, counts[0]);
}

void save_spec_file(const DomainSpec& source, const DomainSpec& target, int shots,
                    std::uint64_t seed, const std::string& path) {
  std::string out;
  auto write_domain = [&out](const char* prefix, const DomainSpec& spec) {
    auto kv = [&out, prefix](const char* key, const std::string& value) {
      out += std::string(prefix) + "." + key + "=" + value + "\n";
    };
    auto num = [](double v) {
      std::string s;
      format_double(s, v);
      return s;
    };
    kv("kind", to_string(spec.kind));
    kv("num_classes", std::to_string(spec.num_classes));
    kv("input_dim", std::to_string(spec.input_dim));
    kv("class_separation", num(spec.class_separation));
    kv("noise_sigma", num(spec.noise_sigma));
    kv("rotation_degrees", num(spec.shift.rotation_degrees));
    std::string tr;
    for (std::size_t j = 0; j < spec.shift.translation.size(); ++j) {
      if (j) tr += ' ';
      format_double(tr, spec.shift.translation[j]);
    }
    kv("translation", tr.empty() ? "0" : tr);
    kv("scale", num(spec.shift.scale));
    kv("samples_per_class", std::to_string(spec.samples_per_class));
    kv("seed", std::to_string(spec.seed));
  };
  write_domain("source", source);
  write_domain("target", target);
  out += "shots=" + std::to_string(shots) + "\n";
  out += "seed=" + std::to_string(seed) + "\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << out;
  if (!f) throw std::runtime_error("failed to write " + path);
}

}  // namespace ssda::datagen
