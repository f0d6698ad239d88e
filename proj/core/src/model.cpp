#include "sybilsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "sybilsim/errors.hpp"

namespace sybilsim {

namespace {

// Offsets of each parameter block inside the flat vector.
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  bool hidden = false;
};

Layout layout_of(const ModelArch& arch) {
  Layout l;
  l.hidden = arch.hidden_dim > 0;
  if (!l.hidden) {
    l.w1 = 0;
    l.b1 = arch.num_classes * arch.input_dim;
    return l;
  }
  l.w1 = 0;
  l.b1 = arch.hidden_dim * arch.input_dim;
  l.w2 = l.b1 + arch.hidden_dim;
  l.b2 = l.w2 + arch.num_classes * arch.hidden_dim;
  return l;
}

void check_batch(const ModelState& model, Batch batch) {
  if (batch.empty()) throw PreconditionError("empty batch");
  if (model.params.size() != model.arch.param_count()) {
    throw DimensionError("model params length " + std::to_string(model.params.size()) +
                         " does not match architecture (" +
                         std::to_string(model.arch.param_count()) + ")");
  }
  for (const auto& ex : batch) {
    if (ex.features.size() != model.arch.input_dim) {
      throw PreconditionError("feature dimension " + std::to_string(ex.features.size()) +
                              " != input_dim " + std::to_string(model.arch.input_dim));
    }
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= model.arch.num_classes) {
      throw PreconditionError("label " + std::to_string(ex.label) + " outside [0, " +
                              std::to_string(model.arch.num_classes) + ")");
    }
  }
}

// y = W x + b for a row-major W with `rows` outputs.
void affine(const double* w, const double* b, std::span<const double> x, std::size_t rows,
            double* y) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Scratch space for one forward pass.
struct Activations {
  std::vector<double> hidden;  // post-ReLU
  std::vector<double> probs;
};

// Fills act.probs with the softmax output and returns -log p(label).
double forward_one(const ModelArch& arch, const Layout& l, const ParamVector& p,
                   const Example& ex, Activations& act) {
  const std::size_t k = arch.num_classes;
  act.probs.resize(k);
  if (!l.hidden) {
    affine(p.data() + l.w1, p.data() + l.b1, ex.features, k, act.probs.data());
  } else {
    act.hidden.resize(arch.hidden_dim);
    affine(p.data() + l.w1, p.data() + l.b1, ex.features, arch.hidden_dim, act.hidden.data());
    for (double& h : act.hidden) h = std::max(h, 0.0);
    affine(p.data() + l.w2, p.data() + l.b2, act.hidden, k, act.probs.data());
  }
  const double max_logit = *std::max_element(act.probs.begin(), act.probs.end());
  const double true_shifted = act.probs[static_cast<std::size_t>(ex.label)] - max_logit;
  double denom = 0.0;
  for (double& z : act.probs) {
    z = std::exp(z - max_logit);
    denom += z;
  }
  const double log_denom = std::log(denom);
  for (double& z : act.probs) z /= denom;
  return log_denom - true_shifted;
}

}  // namespace

std::size_t ModelArch::param_count() const noexcept {
  if (hidden_dim == 0) return num_classes * input_dim + num_classes;
  return hidden_dim * input_dim + hidden_dim + num_classes * hidden_dim + num_classes;
}

void ModelArch::validate() const {
  if (input_dim == 0) throw ConfigError("model: input_dim must be positive");
  if (num_classes == 0) throw ConfigError("model: num_classes must be positive");
}

void LocalTrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("local_train: learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("local_train: batch_size must be positive");
  if (local_steps == 0) throw ConfigError("local_train: local_steps must be positive");
}

std::vector<DenseLayer> unflatten(const ModelArch& arch, const ParamVector& params) {
  if (params.size() != arch.param_count()) {
    throw DimensionError("unflatten: params length does not match architecture");
  }
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (inputs, outputs)
  if (arch.hidden_dim == 0) {
    shapes.emplace_back(arch.input_dim, arch.num_classes);
  } else {
    shapes.emplace_back(arch.input_dim, arch.hidden_dim);
    shapes.emplace_back(arch.hidden_dim, arch.num_classes);
  }
  std::vector<DenseLayer> layers;
  auto it = params.begin();
  for (auto [in, out] : shapes) {
    DenseLayer layer{in, out, {}, {}};
    layer.weights.assign(it, it + static_cast<std::ptrdiff_t>(in * out));
    it += static_cast<std::ptrdiff_t>(in * out);
    layer.biases.assign(it, it + static_cast<std::ptrdiff_t>(out));
    it += static_cast<std::ptrdiff_t>(out);
    layers.push_back(std::move(layer));
  }
  return layers;
}

ParamVector flatten(const ModelArch& arch, const std::vector<DenseLayer>& layers) {
  std::vector<double> out;
  out.reserve(arch.param_count());
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weights.begin(), layer.weights.end());
    out.insert(out.end(), layer.biases.begin(), layer.biases.end());
  }
  if (out.size() != arch.param_count()) {
    throw DimensionError("flatten: layers do not match architecture");
  }
  return ParamVector(std::move(out));
}

ModelState init_model(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  ModelState m{arch, ParamVector(arch.param_count(), 0.0)};
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) m.params[offset + i] = dist(rng);
  };
  const Layout l = layout_of(arch);
  if (!l.hidden) {
    fill(l.w1, arch.input_dim, arch.num_classes);
  } else {
    fill(l.w1, arch.input_dim, arch.hidden_dim);
    fill(l.w2, arch.hidden_dim, arch.num_classes);
  }
  return m;
}

LossResult forward_loss(const ModelState& model, Batch batch) {
  check_batch(model, batch);
  const Layout l = layout_of(model.arch);
  const std::size_t k = model.arch.num_classes;
  LossResult result;
  result.probabilities.resize(batch.size() * k);
  Activations act;
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    total += forward_one(model.arch, l, model.params, batch[n], act);
    std::copy(act.probs.begin(), act.probs.end(), result.probabilities.begin() + n * k);
  }
  result.loss = total / static_cast<double>(batch.size());
  return result;
}

ParamVector gradient(const ModelState& model, Batch batch) {
  check_batch(model, batch);
  const ModelArch& arch = model.arch;
  const Layout l = layout_of(arch);
  const std::size_t k = arch.num_classes;
  const std::size_t d = arch.input_dim;
  const std::size_t h = arch.hidden_dim;
  const ParamVector& p = model.params;

  ParamVector grad(p.size(), 0.0);
  Activations act;
  std::vector<double> delta_out(k);
  std::vector<double> delta_hidden(h);

  for (const Example& ex : batch) {
    forward_one(arch, l, p, ex, act);
    for (std::size_t c = 0; c < k; ++c) delta_out[c] = act.probs[c];
    delta_out[static_cast<std::size_t>(ex.label)] -= 1.0;

    if (!l.hidden) {
      for (std::size_t c = 0; c < k; ++c) {
        double* row = grad.data() + l.w1 + c * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += delta_out[c] * ex.features[j];
        grad[l.b1 + c] += delta_out[c];
      }
      continue;
    }

    for (std::size_t c = 0; c < k; ++c) {
      double* row = grad.data() + l.w2 + c * h;
      for (std::size_t j = 0; j < h; ++j) row[j] += delta_out[c] * act.hidden[j];
      grad[l.b2 + c] += delta_out[c];
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (act.hidden[j] <= 0.0) {
        delta_hidden[j] = 0.0;
        continue;
      }
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += p[l.w2 + c * h + j] * delta_out[c];
      delta_hidden[j] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (delta_hidden[j] == 0.0) continue;
      double* row = grad.data() + l.w1 + j * d;
      for (std::size_t i = 0; i < d; ++i) row[i] += delta_hidden[j] * ex.features[i];
      grad[l.b1 + j] += delta_hidden[j];
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv_n;
  return grad;
}

ParamVector local_train(const ModelState& global, Batch shard, const LocalTrainConfig& cfg,
                        std::uint64_t seed) {
  if (shard.empty()) throw PreconditionError("local_train: empty shard");
  // A zero rate is allowed here (it yields a zero update); configs still
  // require a positive one.
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("local_train: learning_rate must be finite and >= 0");
  }
  if (cfg.batch_size == 0) throw ConfigError("local_train: batch_size must be positive");
  if (cfg.local_steps == 0) throw ConfigError("local_train: local_steps must be positive");

  ModelState local = global;
  const std::size_t n = shard.size();

  if (cfg.batch_size >= n) {
    for (std::size_t step = 0; step < cfg.local_steps; ++step) {
      axpy(-cfg.learning_rate, gradient(local, shard), local.params);
    }
  } else {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    std::vector<Example> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t step = 0; step < cfg.local_steps; ++step) {
      if (cursor >= n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t end = std::min(n, cursor + cfg.batch_size);
      batch.clear();
      for (std::size_t i = cursor; i < end; ++i) batch.push_back(shard[order[i]]);
      cursor = end;
      axpy(-cfg.learning_rate, gradient(local, batch), local.params);
    }
  }

  ParamVector update(global.params.size());
  for (std::size_t i = 0; i < update.size(); ++i) update[i] = local.params[i] - global.params[i];
  return update;
}

Evaluation evaluate(const ModelState& model, Batch dataset) {
  check_batch(model, dataset);
  const std::size_t k = model.arch.num_classes;
  const Layout l = layout_of(model.arch);
  Evaluation ev;
  ev.num_classes = k;
  ev.confusion.assign(k * k, 0);
  ev.predictions.reserve(dataset.size());
  Activations act;
  double total = 0.0;
  std::size_t correct = 0;
  for (const Example& ex : dataset) {
    total += forward_one(model.arch, l, model.params, ex, act);
    // max_element returns the first maximum, which is the lowest index.
    const auto predicted =
        static_cast<int>(std::max_element(act.probs.begin(), act.probs.end()) - act.probs.begin());
    ev.predictions.push_back(predicted);
    ++ev.confusion[static_cast<std::size_t>(ex.label) * k + static_cast<std::size_t>(predicted)];
    if (predicted == ex.label) ++correct;
  }
  ev.loss = total / static_cast<double>(dataset.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return ev;
}

}  // namespace sybilsim
