#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdiag/core.hpp"
#include "pmdiag/io.hpp"
#include "pmdiag/preprocess.hpp"
#include "pmdiag/synth.hpp"

namespace pmdiag {

using ClassWeights = std::array<double, kNumClasses>;
using Probabilities = std::array<double, kNumClasses>;

/// Inverse-frequency weights w_c = N / (K * n_c) over the classes present in
/// `counts`. Classes missing from the map get weight 1 and never contribute.
/// Throws Error(EmptyClass) when a present class has count 0.
ClassWeights class_weights(const ClassCounts& counts);

/// Affine layer; `weights` is fan_in x fan_out, row-major.
struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  double& weight(std::size_t in, std::size_t out) { return weights[in * fan_out + out]; }
  double weight(std::size_t in, std::size_t out) const { return weights[in * fan_out + out]; }
};

struct TrainConfig {
  std::vector<std::size_t> layer_dims{128, 64, 32, kNumClasses};
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  ClassWeights class_weights{1.0, 1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer> layers;
  std::array<std::string, kNumClasses> class_names;
  // Provenance echoes; not part of the parameter digest.
  std::optional<TrainConfig> train_config;
  std::string dataset_digest;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t parameter_count() const;
};

/// Weights uniform in [-sqrt(6 / fan_in), +sqrt(6 / fan_in)], biases zero.
MlpModel init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed);

/// ReLU hidden layers, softmax output. Throws Error(DimensionMismatch).
Probabilities forward(const MlpModel& model, std::span<const double> x);

/// Max-shifted softmax; finite for any finite logits.
Probabilities softmax(std::span<const double> logits);

struct BatchItem {
  std::span<const double> x;
  FaultClass label;
  double weight = 1.0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over the batch of -weight * ln(max(p_label, 1e-12)).
double loss(const MlpModel& model, std::span<const BatchItem> batch);

/// Same shapes as the model parameters.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

/// Analytic gradient of `loss` by backpropagation.
Gradients grad(const MlpModel& model, std::span<const BatchItem> batch);

struct TrainResult {
  MlpModel model;
  std::vector<double> epoch_loss;  // weighted training loss after each epoch
};

/// Mini-batch SGD with momentum. Requires labels on every feature and at least
/// two distinct classes. Bit-reproducible for a fixed config and input order.
TrainResult train(std::span<const FeatureVector> features, const TrainConfig& cfg);

struct Prediction {
  FaultClass label;
  Probabilities probs;
};

/// Argmax with ties resolved toward the lowest class code.
FaultClass argmax(const Probabilities& probs) noexcept;
Prediction predict(const MlpModel& model, std::span<const double> x);

/// SHA-256 over the architecture and parameters only.
std::string model_digest(const MlpModel& model);

Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);  // missing keys keep defaults
Json model_to_json(const MlpModel& model);
MlpModel model_from_json(const Json& j);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace pmdiag
