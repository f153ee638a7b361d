#include "ssda/nn.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ssda::nn {

namespace {

double clamped(double norm) { return std::max(norm, kNormFloor); }

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

bool ParamSet::same_shape(const ParamSet& o) const {
  if (layers.size() != o.layers.size() || !head.same_shape(o.head)) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].weight.same_shape(o.layers[l].weight) ||
        layers[l].bias.size() != o.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

Gradients zeros_like(const ParamSet& p) {
  Gradients g;
  g.layers.reserve(p.layers.size());
  for (const Layer& layer : p.layers) {
    g.layers.push_back({Matrix(layer.weight.rows, layer.weight.cols), Vec(layer.bias.size(), 0.0)});
  }
  g.head = Matrix(p.head.rows, p.head.cols);
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  if (!into.same_shape(g)) throw std::invalid_argument("accumulate: gradient shapes differ");
  for (std::size_t l = 0; l < into.layers.size(); ++l) {
    for (std::size_t i = 0; i < into.layers[l].weight.data.size(); ++i) {
      into.layers[l].weight.data[i] += g.layers[l].weight.data[i];
    }
    for (std::size_t i = 0; i < into.layers[l].bias.size(); ++i) {
      into.layers[l].bias[i] += g.layers[l].bias[i];
    }
  }
  for (std::size_t i = 0; i < into.head.data.size(); ++i) into.head.data[i] += g.head.data[i];
}

bool all_finite(const ParamSet& p) {
  for (const Layer& l : p.layers) {
    if (!ssda::all_finite(l.weight) || !ssda::all_finite(l.bias)) return false;
  }
  return ssda::all_finite(p.head);
}

SoftLabel one_hot(int num_classes, int y) {
  if (y < 0 || y >= num_classes) throw std::invalid_argument("one_hot: class index out of range");
  SoftLabel s;
  s.probs.assign(num_classes, 0.0);
  s.probs[y] = 1.0;
  return s;
}

int ModelState::input_dim() const {
  return params.layers.empty() ? params.head.cols : params.layers.front().weight.cols;
}

ModelState make_model(int input_dim, const std::vector<int>& hidden_dims, int feature_dim,
                      int num_classes, double temperature, std::uint64_t seed) {
  if (input_dim < 1 || feature_dim < 1) throw std::invalid_argument("make_model: dims must be positive");
  if (num_classes < 2) throw std::invalid_argument("make_model: need at least 2 classes");
  if (!(temperature > 0.0)) throw std::invalid_argument("make_model: temperature must be > 0");
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("make_model: dims must be positive");
  }

  std::mt19937_64 rng(seed);
  auto init_matrix = [&rng](Matrix& m) {
    double a = std::sqrt(6.0 / (m.cols + m.rows));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& w : m.data) w = u(rng);
  };

  ModelState model;
  model.temperature = temperature;
  model.rng_seed = seed;

  int prev = input_dim;
  for (int h : hidden_dims) {
    Layer layer{Matrix(h, prev), Vec(h, 0.0)};
    init_matrix(layer.weight);
    model.params.layers.push_back(std::move(layer));
    prev = h;
  }
  Layer feature_layer{Matrix(feature_dim, prev), Vec(feature_dim, 0.0)};
  init_matrix(feature_layer.weight);
  model.params.layers.push_back(std::move(feature_layer));

  model.params.head = Matrix(num_classes, feature_dim);
  init_matrix(model.params.head);

  model.momentum = zeros_like(model.params);
  return model;
}

ModelState default_model(int input_dim, int num_classes, double temperature, std::uint64_t seed) {
  return make_model(input_dim, {32}, 16, num_classes, temperature, seed);
}

ForwardCache forward(const ModelState& model, const std::vector<Vec>& batch) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const int d = model.input_dim();
  const int k = model.num_classes();
  const std::size_t n_layers = model.params.layers.size();

  ForwardCache cache;
  cache.inputs = batch;
  cache.head_norms.resize(k);
  cache.head_unit.assign(k, Vec(model.feature_dim(), 0.0));
  for (int c = 0; c < k; ++c) {
    Vec row(model.feature_dim());
    for (int j = 0; j < model.feature_dim(); ++j) row[j] = model.params.head(c, j);
    double raw = norm2(row);
    cache.head_norms[c] = raw;
    double inv = 1.0 / clamped(raw);
    for (int j = 0; j < model.feature_dim(); ++j) cache.head_unit[c][j] = row[j] * inv;
  }

  cache.pre.resize(batch.size());
  cache.act.resize(batch.size());
  cache.features.resize(batch.size());
  cache.feature_norms.resize(batch.size());
  cache.logits.resize(batch.size());
  cache.probs.resize(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec& x = batch[i];
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument("forward: input dimension mismatch");
    if (!ssda::all_finite(x)) throw std::invalid_argument("forward: non-finite input");

    cache.pre[i].resize(n_layers);
    cache.act[i].resize(n_layers);
    const Vec* a_prev = &x;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Layer& layer = model.params.layers[l];
      Vec z(layer.bias);
      for (int r = 0; r < layer.weight.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < layer.weight.cols; ++c) s += layer.weight(r, c) * (*a_prev)[c];
        z[r] += s;
      }
      cache.pre[i][l] = z;
      if (l + 1 == n_layers) {
        cache.act[i][l] = std::move(z);  // feature layer is linear
      } else {
        Vec a(z.size());
        for (std::size_t r = 0; r < z.size(); ++r) a[r] = std::tanh(z[r]);
        cache.act[i][l] = std::move(a);
      }
      a_prev = &cache.act[i][l];
    }

    const Vec& f = n_layers == 0 ? x : cache.act[i].back();
    cache.features[i] = f;
    double raw = norm2(f);
    cache.feature_norms[i] = raw;
    double inv_nf = 1.0 / clamped(raw);

    Vec logits(k);
    for (int c = 0; c < k; ++c) {
      logits[c] = dot(f, cache.head_unit[c]) * inv_nf / model.temperature;
    }

    double m = *std::max_element(logits.begin(), logits.end());
    Vec p(k);
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      p[c] = std::exp(logits[c] - m);
      sum += p[c];
    }
    for (int c = 0; c < k; ++c) p[c] /= sum;

    cache.logits[i] = std::move(logits);
    cache.probs[i] = std::move(p);
  }
  return cache;
}

double cross_entropy(const Vec& probs, const SoftLabel& target) {
  if (probs.size() != target.probs.size()) throw std::invalid_argument("cross_entropy: length mismatch");
  double loss = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    loss -= target.probs[c] * std::log(std::max(probs[c], kProbFloor));
  }
  return loss;
}

double mean_cross_entropy(const ForwardCache& cache, const std::vector<SoftLabel>& targets) {
  if (cache.probs.size() != targets.size()) throw std::invalid_argument("mean_cross_entropy: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) total += cross_entropy(cache.probs[i], targets[i]);
  return total / static_cast<double>(targets.size());
}

Gradients backward(const ModelState& model, const ForwardCache& cache,
                   const std::vector<SoftLabel>& targets) {
  const int k = model.num_classes();
  const int fd = model.feature_dim();
  const std::size_t n = cache.probs.size();
  const std::size_t n_layers = model.params.layers.size();

  if (static_cast<int>(cache.head_unit.size()) != k || cache.inputs.size() != n ||
      cache.features.empty() || static_cast<int>(cache.features[0].size()) != fd) {
    throw std::invalid_argument("backward: cache does not match model");
  }
  if (targets.size() != n) throw std::invalid_argument("backward: batch size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (cache.act[i].size() != n_layers) throw std::invalid_argument("backward: cache does not match model");
  }

  Gradients grads = zeros_like(model.params);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_t = 1.0 / model.temperature;

  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(targets[i].probs.size()) != k) {
      throw std::invalid_argument("backward: target length mismatch");
    }

    // Gradient of the clamped cross-entropy. A target class whose
    // probability sits below kProbFloor contributes a constant log term and
    // drops out of the logit gradient; with nothing clamped this is the
    // usual probs - targets.
    const Vec& p = cache.probs[i];
    const Vec& y = targets[i].probs;
    bool clamp_hit = false;
    for (int c = 0; c < k; ++c) {
      if (y[c] > 0.0 && p[c] < kProbFloor) clamp_hit = true;
    }
    Vec dlogit(k);
    if (!clamp_hit) {
      for (int c = 0; c < k; ++c) dlogit[c] = (p[c] - y[c]) * inv_n;
    } else {
      double active_mass = 0.0;
      for (int c = 0; c < k; ++c) {
        if (y[c] > 0.0 && p[c] >= kProbFloor) active_mass += y[c];
      }
      for (int c = 0; c < k; ++c) {
        const double own = (y[c] > 0.0 && p[c] >= kProbFloor) ? y[c] : 0.0;
        dlogit[c] = (active_mass * p[c] - own) * inv_n;
      }
    }

    const Vec& f = cache.features[i];
    const double nf = clamped(cache.feature_norms[i]);
    const bool f_clamped = cache.feature_norms[i] < kNormFloor;
    Vec u(fd);
    for (int j = 0; j < fd; ++j) u[j] = f[j] / nf;

    // logit_c = (u . v_c) / T with u, v_c the clamp-normalized vectors. For
    // an unclamped vector the normalization contributes the usual
    // (I - u u^T)/||.|| factor; a clamped one is just a constant scale.
    Vec df(fd, 0.0);
    for (int c = 0; c < k; ++c) {
      const double g = dlogit[c] * inv_t;
      if (g == 0.0) continue;
      const Vec& v = cache.head_unit[c];
      const double cos_c = cache.logits[i][c] * model.temperature;
      const double nh = clamped(cache.head_norms[c]);
      const bool h_clamped = cache.head_norms[c] < kNormFloor;
      for (int j = 0; j < fd; ++j) {
        df[j] += g * (f_clamped ? v[j] : v[j] - cos_c * u[j]) / nf;
        grads.head(c, j) += g * (h_clamped ? u[j] : u[j] - cos_c * v[j]) / nh;
      }
    }

    if (n_layers == 0) continue;
    Vec delta = std::move(df);
    for (std::size_t li = n_layers; li-- > 0;) {
      const Layer& layer = model.params.layers[li];
      Vec dz;
      if (li + 1 == n_layers) {
        dz = std::move(delta);  // linear feature layer
      } else {
        const Vec& a = cache.act[i][li];
        dz.resize(delta.size());
        for (std::size_t r = 0; r < delta.size(); ++r) dz[r] = delta[r] * (1.0 - a[r] * a[r]);
      }
      const Vec& a_prev = li == 0 ? cache.inputs[i] : cache.act[i][li - 1];
      Layer& lg = grads.layers[li];
      for (int r = 0; r < layer.weight.rows; ++r) {
        for (int c = 0; c < layer.weight.cols; ++c) lg.weight(r, c) += dz[r] * a_prev[c];
        lg.bias[r] += dz[r];
      }
      if (li > 0) {
        delta.assign(layer.weight.cols, 0.0);
        for (int r = 0; r < layer.weight.rows; ++r) {
          for (int c = 0; c < layer.weight.cols; ++c) delta[c] += layer.weight(r, c) * dz[r];
        }
      }
    }
  }
  return grads;
}

void sgd_step(ModelState& model, const Gradients& grads, double learning_rate, double momentum) {
  if (!model.params.same_shape(grads)) throw std::invalid_argument("sgd_step: gradient shapes differ");
  if (!all_finite(grads)) throw std::runtime_error("sgd_step: non-finite gradient");

  auto update = [learning_rate, momentum](double* w, double* v, const double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = momentum * v[i] + g[i];
      w[i] -= learning_rate * v[i];
    }
  };
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    update(model.params.layers[l].weight.data.data(), model.momentum.layers[l].weight.data.data(),
           grads.layers[l].weight.data.data(), grads.layers[l].weight.data.size());
    update(model.params.layers[l].bias.data(), model.momentum.layers[l].bias.data(),
           grads.layers[l].bias.data(), grads.layers[l].bias.size());
  }
  update(model.params.head.data.data(), model.momentum.head.data.data(), grads.head.data.data(),
         grads.head.data.size());

  if (!all_finite(model.params)) throw std::runtime_error("sgd_step: non-finite parameter after update");
}

Prediction predict(const ModelState& model, const Vec& x) {
  ForwardCache cache = forward(model, {x});
  const Vec& p = cache.probs[0];
  int best = 0;
  for (int c = 1; c < static_cast<int>(p.size()); ++c) {
    if (p[c] > p[best]) best = c;
  }
  return {best, p[best]};
}

namespace {

void write_tensor(std::string& out, const std::string& name, const Matrix& m) {
  out += "tensor " + name + " " + std::to_string(m.rows) + " " + std::to_string(m.cols) + "\n";
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      if (c) out += ' ';
      format_double(out, m(r, c));
    }
    out += '\n';
  }
}

void write_tensor(std::string& out, const std::string& name, const Vec& v) {
  Matrix m(1, static_cast<int>(v.size()));
  m.data = v;
  write_tensor(out, name, m);
}

struct CheckpointReader {
  std::ifstream in;
  std::string path;
  int line_no = 0;

  std::string next_line() {
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error(path + ": unexpected end of checkpoint at line " + std::to_string(line_no + 1));
    }
    ++line_no;
    return line;
  }

  Matrix read_tensor(const std::string& expected_name) {
    std::istringstream hdr(next_line());
    std::string tag, name;
    int rows = 0, cols = 0;
    if (!(hdr >> tag >> name >> rows >> cols) || tag != "tensor" || name != expected_name || rows < 0 || cols < 0) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected tensor " + expected_name);
    }
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      std::istringstream row(next_line());
      for (int c = 0; c < cols; ++c) {
        if (!(row >> m(r, c))) {
          throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed tensor row");
        }
      }
    }
    return m;
  }
};

Vec to_vec(const Matrix& m) { return m.data; }

}  // namespace

void save_checkpoint(const ModelState& model, const std::string& path) {
  std::string out = "ssda-model v1\n";
  out += "temperature ";
  format_double(out, model.temperature);
  out += "\nrng_seed " + std::to_string(model.rng_seed) + "\n";
  out += "num_layers " + std::to_string(model.params.layers.size()) + "\n";
  for (std::size_t l = 0; l < model.params.layers.size(); ++l) {
    write_tensor(out, "layer" + std::to_string(l) + ".weight", model.params.layers[l].weight);
    write_tensor(out, "layer" + std::to_string(l) + ".bias", model.params.layers[l].bias);
  }
  write_tensor(out, "head", model.params.head);
  for (std::size_t l = 0; l < model.momentum.layers.size(); ++l) {
    write_tensor(out, "momentum.layer" + std::to_string(l) + ".weight", model.momentum.layers[l].weight);
    write_tensor(out, "momentum.layer" + std::to_string(l) + ".bias", model.momentum.layers[l].bias);
  }
  write_tensor(out, "momentum.head", model.momentum.head);
  out += "end\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << out;
  if (!f) throw std::runtime_error("failed to write " + path);
}

ModelState load_checkpoint(const std::string& path) {
  CheckpointReader reader{std::ifstream(path), path};
  if (!reader.in) throw std::runtime_error("cannot open " + path);
  if (reader.next_line() != "ssda-model v1") throw std::runtime_error(path + ": not a model checkpoint");

  ModelState model;
  {
    std::istringstream ls(reader.next_line());
    std::string key;
    if (!(ls >> key >> model.temperature) || key != "temperature") {
      throw std::runtime_error(path + ":2: expected temperature");
    }
  }
  {
    std::istringstream ls(reader.next_line());
    std::string key;
    if (!(ls >> key >> model.rng_seed) || key != "rng_seed") {
      throw std::runtime_error(path + ":3: expected rng_seed");
    }
  }
  std::size_t n_layers = 0;
  {
    std::istringstream ls(reader.next_line());
    std::string key;
    if (!(ls >> key >> n_layers) || key != "num_layers") {
      throw std::runtime_error(path + ":4: expected num_layers");
    }
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.weight = reader.read_tensor("layer" + std::to_string(l) + ".weight");
    layer.bias = to_vec(reader.read_tensor("layer" + std::to_string(l) + ".bias"));
    model.params.layers.push_back(std::move(layer));
  }
  model.params.head = reader.read_tensor("head");
  for (std::size_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.weight = reader.read_tensor("momentum.layer" + std::to_string(l) + ".weight");
    layer.bias = to_vec(reader.read_tensor("momentum.layer" + std::to_string(l) + ".bias"));
    model.momentum.layers.push_back(std::move(layer));
  }
  model.momentum.head = reader.read_tensor("momentum.head");
  if (reader.next_line() != "end") throw std::runtime_error(path + ": missing end marker");
  if (!model.params.same_shape(model.momentum)) {
    throw std::runtime_error(path + ": parameter and momentum shapes differ");
  }
  return model;
}

}  // namespace ssda::nn
