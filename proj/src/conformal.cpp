#include "pmdiag/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pmdiag/errors.hpp"

namespace pmdiag {

namespace {

constexpr double kDistributionTolerance = 1e-9;

// Mass of a strict prefix; kept below 1 so that only the full ranking reaches it.
double partial_mass(double running) noexcept {
  return std::min(running, std::nextafter(1.0, 0.0));
}

}  // namespace

void ConformalPredictor::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
  if (!(qhat > 0.0 && qhat <= 1.0)) throw Error(ErrorCode::InvalidConfig, "qhat must lie in (0, 1]");
  if (n_calibration < 1) throw Error(ErrorCode::InvalidConfig, "n_calibration must be >= 1");
}

bool PredictionSet::contains(FaultClass c) const noexcept {
  return std::any_of(members.begin(), members.end(),
                     [c](const SetMember& m) { return m.fault_class == c; });
}

bool Diagnosis::contains(FaultClass c) const noexcept {
  return std::any_of(prediction_set.begin(), prediction_set.end(),
                     [c](const SetMember& m) { return m.fault_class == c; });
}

std::array<FaultClass, kNumClasses> rank_classes(const Probabilities& probs) noexcept {
  std::array<FaultClass, kNumClasses> order = kAllClasses;
  std::stable_sort(order.begin(), order.end(), [&](FaultClass a, FaultClass b) {
    return probs[index(a)] > probs[index(b)];
  });
  return order;
}

void check_distribution(const Probabilities& probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::BadDistribution, "negative or non-finite probability");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw Error(ErrorCode::BadDistribution, "probabilities sum to " + std::to_string(sum));
  }
}

double aps_score(const Probabilities& probs, FaultClass true_class) {
  check_distribution(probs);
  const auto order = rank_classes(probs);
  double running = 0.0;
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (r + 1 == kNumClasses) return 1.0;
    running += probs[index(order[r])];
    if (order[r] == true_class) return partial_mass(running);
  }
  return 1.0;
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw Error(ErrorCode::EmptyCalibration, "no calibration scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
  const std::size_t n = scores.size();
  // Guard against (n + 1)(1 - alpha) landing a rounding error above an integer.
  const double target = static_cast<double>(n + 1) * (1.0 - alpha);
  const auto k = static_cast<std::size_t>(std::ceil(target - 1e-9 * target));
  if (k > n) return 1.0;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[std::max<std::size_t>(k, 1) - 1];
}

ConformalPredictor calibrate(const MlpModel& model, std::span<const FeatureVector> calibration,
                             double alpha) {
  if (calibration.empty()) throw Error(ErrorCode::EmptyCalibration, "calibration set is empty");
  std::vector<double> scores;
  scores.reserve(calibration.size());
  for (const auto& f : calibration) {
    if (!f.label) {
      throw Error(ErrorCode::InvalidArgument, "calibration feature '" + f.source_id + "' is unlabeled",
                  0, f.source_id);
    }
    scores.push_back(aps_score(forward(model, f.values), *f.label));
  }
  ConformalPredictor p;
  p.alpha = alpha;
  p.qhat = conformal_quantile(scores, alpha);
  p.n_calibration = calibration.size();
  p.model_digest = model_digest(model);
  return p;
}

PredictionSet predict_set(double qhat, const Probabilities& probs) {
  check_distribution(probs);
  const auto order = rank_classes(probs);
  PredictionSet set;
  set.argmax_class = order.front();
  double running = 0.0;
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    const FaultClass c = order[r];
    set.members.push_back({c, probs[index(c)]});
    running += probs[index(c)];
    const double mass = r + 1 == kNumClasses ? 1.0 : partial_mass(running);
    if (mass >= qhat) break;
  }
  set.singleton = set.members.size() == 1;
  return set;
}

PredictionSet predict_set(const ConformalPredictor& predictor, const Probabilities& probs) {
  return predict_set(predictor.qhat, probs);
}

Diagnosis diagnose(const ConformalPredictor& predictor, const MlpModel& model,
                   const FeatureVector& feature) {
  PredictionSet set = predict_set(predictor, forward(model, feature.values));
  Diagnosis d;
  d.source_id = feature.source_id;
  d.prediction_set = std::move(set.members);
  d.alpha = predictor.alpha;
  d.qhat = predictor.qhat;
  d.singleton = set.singleton;
  d.argmax_class = set.argmax_class;
  return d;
}

void check_binding(const ConformalPredictor& predictor, const MlpModel& model) {
  if (predictor.model_digest != model_digest(model)) {
    throw Error(ErrorCode::DigestMismatch, "predictor was calibrated against a different model");
  }
}

Json predictor_to_json(const ConformalPredictor& p) {
  return {{"alpha", p.alpha},
          {"qhat", p.qhat},
          {"n_calibration", p.n_calibration},
          {"model_digest", p.model_digest}};
}

ConformalPredictor predictor_from_json(const Json& j) {
  ConformalPredictor p;
  try {
    p.alpha = j.at("alpha").get<double>();
    p.qhat = j.at("qhat").get<double>();
    p.n_calibration = j.at("n_calibration").get<std::size_t>();
    p.model_digest = j.at("model_digest").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("predictor file: ") + e.what());
  }
  p.validate();
  return p;
}

void save_predictor(const ConformalPredictor& p, const std::filesystem::path& path) {
  write_file_atomic(path, predictor_to_json(p).dump(2) + "\n");
}

ConformalPredictor load_predictor(const std::filesystem::path& path) {
  Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::Parse, "predictor file is not valid JSON");
  return predictor_from_json(j);
}

Json diagnosis_to_json(const Diagnosis& d) {
  Json set = Json::array();
  for (const auto& m : d.prediction_set) {
    set.push_back({{"class", std::string(name(m.fault_class))}, {"probability", m.probability}});
  }
  return {{"source_id", d.source_id},
          {"prediction_set", set},
          {"argmax", std::string(name(d.argmax_class))},
          {"singleton", d.singleton},
          {"alpha", d.alpha},
          {"qhat", d.qhat},
          {"guarantee", d.guarantee()}};
}

}  // namespace pmdiag
