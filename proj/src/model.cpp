#include "pmdiag/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pmdiag/errors.hpp"

namespace pmdiag {

namespace {

// Post-activation values per layer: acts[0] is the input, acts.back() the logits.
using Activations = std::vector<std::vector<double>>;

void check_input(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input length " + std::to_string(x.size()) +
                                                  " != model input " +
                                                  std::to_string(model.input_dim()));
  }
}

void forward_pass(const MlpModel& model, std::span<const double> x, Activations& acts) {
  check_input(model, x);
  acts.resize(model.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    const auto& in = acts[l];
    auto& out = acts[l + 1];
    out.assign(layer.biases.begin(), layer.biases.end());
    for (std::size_t i = 0; i < layer.fan_in; ++i) {
      const double xi = in[i];
      if (xi == 0.0) continue;
      const double* row = &layer.weights[i * layer.fan_out];
      for (std::size_t j = 0; j < layer.fan_out; ++j) out[j] += xi * row[j];
    }
    if (l + 1 < model.layers.size()) {
      for (auto& v : out) v = std::max(0.0, v);
    }
  }
}

void validate_dims(std::span<const std::size_t> dims) {
  if (dims.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "need at least an input and an output layer");
  }
  if (std::any_of(dims.begin(), dims.end(), [](std::size_t d) { return d == 0; })) {
    throw Error(ErrorCode::InvalidConfig, "layer dimensions must be positive");
  }
  if (dims.back() != kNumClasses) {
    throw Error(ErrorCode::InvalidConfig, "output dimension must equal the number of classes");
  }
}

Json parameters_to_json(const MlpModel& model) {
  Json weights = Json::array();
  Json biases = Json::array();
  for (const auto& layer : model.layers) {
    weights.push_back(layer.weights);
    biases.push_back(layer.biases);
  }
  return {{"layer_dims", model.layer_dims}, {"weights", weights}, {"biases", biases}};
}

}  // namespace

ClassWeights class_weights(const ClassCounts& counts) {
  if (counts.empty()) {
    throw Error(ErrorCode::EmptyClass, "no classes present");
  }
  std::size_t total = 0;
  for (const auto& [cls, n] : counts) {
    if (n == 0) {
      throw Error(ErrorCode::EmptyClass, "class " + std::string(name(cls)) + " has zero samples");
    }
    total += n;
  }
  ClassWeights w;
  w.fill(1.0);
  const std::size_t k = counts.size();
  for (const auto& [cls, n] : counts) {
    w[index(cls)] = static_cast<double>(total) / static_cast<double>(k * n);
  }
  return w;
}

void TrainConfig::validate() const {
  validate_dims(layer_dims);
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "momentum must lie in [0, 1)");
  }
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::InvalidConfig, "class weights must be positive");
    }
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.biases.size();
  return n;
}

MlpModel init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
  validate_dims(layer_dims);
  MlpModel model;
  model.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  for (auto c : kAllClasses) model.class_names[index(c)] = std::string(name(c));
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.fan_in = layer_dims[l];
    layer.fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weights.resize(layer.fan_in * layer.fan_out);
    for (auto& w : layer.weights) w = dist(rng);
    layer.biases.assign(layer.fan_out, 0.0);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

Probabilities softmax(std::span<const double> logits) {
  if (logits.size() != kNumClasses) {
    throw Error(ErrorCode::DimensionMismatch, "expected one logit per class");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  Probabilities p;
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(logits[c] - top);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Probabilities forward(const MlpModel& model, std::span<const double> x) {
  Activations acts;
  forward_pass(model, x, acts);
  return softmax(acts.back());
}

double loss(const MlpModel& model, std::span<const BatchItem> batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  Activations acts;
  double total = 0.0;
  for (const auto& item : batch) {
    forward_pass(model, item.x, acts);
    const Probabilities p = softmax(acts.back());
    total += -item.weight * std::log(std::max(p[index(item.label)], kProbabilityFloor));
  }
  return total / static_cast<double>(batch.size());
}

Gradients grad(const MlpModel& model, std::span<const BatchItem> batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  Gradients g;
  for (const auto& layer : model.layers) {
    g.weights.emplace_back(layer.weights.size(), 0.0);
    g.biases.emplace_back(layer.biases.size(), 0.0);
  }

  Activations acts;
  std::vector<double> delta;
  std::vector<double> prev_delta;
  for (const auto& item : batch) {
    forward_pass(model, item.x, acts);
    const Probabilities p = softmax(acts.back());
    const std::size_t y = index(item.label);
    // Below the clamp the loss is flat in the parameters.
    if (p[y] < kProbabilityFloor) continue;

    delta.assign(p.begin(), p.end());
    delta[y] -= 1.0;
    for (auto& d : delta) d *= item.weight;

    for (std::size_t l = model.layers.size(); l-- > 0;) {
      const DenseLayer& layer = model.layers[l];
      const auto& in = acts[l];
      auto& gw = g.weights[l];
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        const double xi = in[i];
        if (xi == 0.0) continue;
        double* row = &gw[i * layer.fan_out];
        for (std::size_t j = 0; j < layer.fan_out; ++j) row[j] += xi * delta[j];
      }
      for (std::size_t j = 0; j < layer.fan_out; ++j) g.biases[l][j] += delta[j];
      if (l == 0) break;

      prev_delta.assign(layer.fan_in, 0.0);
      for (std::size_t i = 0; i < layer.fan_in; ++i) {
        if (in[i] <= 0.0) continue;  // ReLU was inactive
        const double* row = &layer.weights[i * layer.fan_out];
        double acc = 0.0;
        for (std::size_t j = 0; j < layer.fan_out; ++j) acc += row[j] * delta[j];
        prev_delta[i] = acc;
      }
      std::swap(delta, prev_delta);
    }
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& v : g.weights) for (auto& x : v) x *= scale;
  for (auto& v : g.biases) for (auto& x : v) x *= scale;
  return g;
}

TrainResult train(std::span<const FeatureVector> features, const TrainConfig& cfg) {
  cfg.validate();
  std::set<FaultClass> present;
  std::vector<BatchItem> items;
  items.reserve(features.size());
  for (const auto& f : features) {
    if (!f.label) {
      throw Error(ErrorCode::InvalidArgument, "unlabeled feature '" + f.source_id + "'", 0,
                  f.source_id);
    }
    if (f.values.size() != cfg.layer_dims.front()) {
      throw Error(ErrorCode::DimensionMismatch, "feature '" + f.source_id + "' has length " +
                                                    std::to_string(f.values.size()),
                  0, f.source_id);
    }
    present.insert(*f.label);
    items.push_back({f.values, *f.label, cfg.class_weights[index(*f.label)]});
  }
  if (present.size() < 2) {
    throw Error(ErrorCode::DegenerateData, "training needs at least two classes");
  }

  TrainResult result;
  MlpModel& model = result.model;
  model = init_params(cfg.layer_dims, cfg.seed);
  Gradients velocity;
  for (const auto& layer : model.layers) {
    velocity.weights.emplace_back(layer.weights.size(), 0.0);
    velocity.biases.emplace_back(layer.biases.size(), 0.0);
  }

  auto step = [&](std::vector<double>& params, std::vector<double>& vel,
                  const std::vector<double>& g) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      vel[k] = cfg.momentum * vel[k] - cfg.learning_rate * g[k];
      params[k] += vel[k];
    }
  };

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  std::vector<BatchItem> batch;
  result.epoch_loss.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(items[order[k]]);
      const Gradients g = grad(model, batch);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        step(model.layers[l].weights, velocity.weights[l], g.weights[l]);
        step(model.layers[l].biases, velocity.biases[l], g.biases[l]);
      }
    }
    result.epoch_loss.push_back(loss(model, items));
  }
  model.train_config = cfg;
  return result;
}

FaultClass argmax(const Probabilities& probs) noexcept {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return static_cast<FaultClass>(best);
}

Prediction predict(const MlpModel& model, std::span<const double> x) {
  Probabilities p = forward(model, x);
  return {argmax(p), p};
}

std::string model_digest(const MlpModel& model) {
  return sha256_hex(parameters_to_json(model).dump());
}

Json train_config_to_json(const TrainConfig& cfg) {
  return {{"layer_dims", cfg.layer_dims},   {"learning_rate", cfg.learning_rate},
          {"momentum", cfg.momentum},       {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},   {"seed", cfg.seed},
          {"class_weights", cfg.class_weights}};
}

TrainConfig train_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "train config must be an object");
  TrainConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "layer_dims") cfg.layer_dims = value.get<std::vector<std::size_t>>();
      else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
      else if (key == "momentum") cfg.momentum = value.get<double>();
      else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "class_weights") cfg.class_weights = value.get<ClassWeights>();
      else throw Error(ErrorCode::InvalidConfig, "unknown train key '" + key + "'");
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Json model_to_json(const MlpModel& model) {
  Json j = parameters_to_json(model);
  j["class_names"] = model.class_names;
  j["parameter_digest"] = model_digest(model);
  j["dataset_digest"] = model.dataset_digest;
  j["train_config"] = model.train_config ? train_config_to_json(*model.train_config) : Json();
  return j;
}

MlpModel model_from_json(const Json& j) {
  MlpModel model;
  try {
    model.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    validate_dims(model.layer_dims);
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() + 1 != model.layer_dims.size() || biases.size() != weights.size()) {
      throw Error(ErrorCode::Parse, "layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      DenseLayer layer;
      layer.fan_in = model.layer_dims[l];
      layer.fan_out = model.layer_dims[l + 1];
      layer.weights = weights[l].get<std::vector<double>>();
      layer.biases = biases[l].get<std::vector<double>>();
      if (layer.weights.size() != layer.fan_in * layer.fan_out ||
          layer.biases.size() != layer.fan_out) {
        throw Error(ErrorCode::Parse, "layer " + std::to_string(l) + " has wrong shape");
      }
      model.layers.push_back(std::move(layer));
    }
    model.class_names = j.at("class_names").get<std::array<std::string, kNumClasses>>();
    if (auto it = j.find("dataset_digest"); it != j.end() && it->is_string()) {
      model.dataset_digest = it->get<std::string>();
    }
    if (auto it = j.find("train_config"); it != j.end() && !it->is_null()) {
      model.train_config = train_config_from_json(*it);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("model file: ") + e.what());
  }
  for (auto c : kAllClasses) {
    if (model.class_names[index(c)] != name(c)) {
      throw Error(ErrorCode::Parse, "class_names do not match the fault taxonomy");
    }
  }
  if (auto it = j.find("parameter_digest"); it != j.end() && *it != model_digest(model)) {
    throw Error(ErrorCode::DigestMismatch, "model parameters do not match their recorded digest");
  }
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model).dump(1) + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
  Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Parse, "model file is not valid JSON");
  return model_from_json(j);
}

}  // namespace pmdiag
