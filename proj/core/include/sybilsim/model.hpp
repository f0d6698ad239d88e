#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sybilsim/linalg.hpp"

namespace sybilsim {

// Classifier shape. hidden_dim == 0 is softmax regression; otherwise a single
// ReLU hidden layer sits between input and output.
struct ModelArch {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t hidden_dim = 0;

  std::size_t param_count() const noexcept;
  void validate() const;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

// Parameters are stored flat, layer by layer, each layer as its row-major
// weight matrix (outputs x inputs) followed by its bias vector.
struct ModelState {
  ModelArch arch;
  ParamVector params;
};

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> biases;   // outputs
};

std::vector<DenseLayer> unflatten(const ModelArch& arch, const ParamVector& params);
ParamVector flatten(const ModelArch& arch, const std::vector<DenseLayer>& layers);

struct LocalTrainConfig {
  double learning_rate = 1.0;
  std::size_t batch_size = 1;
  std::size_t local_steps = 2;

  void validate() const;
};

// A feature row and the label the learner sees for it. For poisoned shards
// the label is the flipped one.
struct Example {
  std::span<const double> features;
  int label = 0;
};

using Batch = std::span<const Example>;

struct LossResult {
  double loss = 0.0;
  std::vector<double> probabilities;  // batch size x num_classes, row-major
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> confusion;  // true class x predicted class, row-major
  std::vector<int> predictions;

  std::size_t confusion_at(std::size_t truth, std::size_t predicted) const {
    return confusion[truth * num_classes + predicted];
  }
};

// Glorot-uniform weights, zero biases.
ModelState init_model(const ModelArch& arch, std::uint64_t seed);

// Mean cross-entropy and softmax probabilities.
LossResult forward_loss(const ModelState& model, Batch batch);

// Analytic gradient of the mean cross-entropy, laid out like the params.
ParamVector gradient(const ModelState& model, Batch batch);

// Runs cfg.local_steps minibatch SGD steps from the global model and returns
// the additive delta (local params - global params).
ParamVector local_train(const ModelState& global, Batch shard, const LocalTrainConfig& cfg,
                        std::uint64_t seed);

// Argmax prediction, ties to the lowest class index.
Evaluation evaluate(const ModelState& model, Batch dataset);

}  // namespace sybilsim
