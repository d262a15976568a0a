#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pmdiag/model.hpp"

namespace pmdiag {

/// Split-conformal predictor using non-randomised APS scores.
struct ConformalPredictor {
  double alpha = 0.05;
  double qhat = 1.0;
  std::size_t n_calibration = 0;
  std::string model_digest;

  void validate() const;
};

struct SetMember {
  FaultClass fault_class;
  double probability;
  bool operator==(const SetMember&) const = default;
};

struct PredictionSet {
  std::vector<SetMember> members;  // descending probability
  bool singleton = false;
  FaultClass argmax_class = FaultClass::Nominal;

  bool contains(FaultClass c) const noexcept;
};

struct Diagnosis {
  std::string source_id;
  std::vector<SetMember> prediction_set;
  double alpha = 0.05;
  double qhat = 1.0;
  bool singleton = false;
  FaultClass argmax_class = FaultClass::Nominal;

  /// Set-level coverage guarantee 1 - alpha. This is not a per-prediction
  /// probability of being correct.
  double guarantee() const noexcept { return 1.0 - alpha; }
  bool contains(FaultClass c) const noexcept;
};

/// Classes by descending probability, ties toward the lowest code.
std::array<FaultClass, kNumClasses> rank_classes(const Probabilities& probs) noexcept;

/// Throws Error(BadDistribution) unless entries are >= 0 and sum to 1 within 1e-9.
void check_distribution(const Probabilities& probs);

/// Probability mass of the ranked classes up to and including `true_class`.
/// Exactly 1.0 when `true_class` ranks last.
double aps_score(const Probabilities& probs, FaultClass true_class);

/// The k-th smallest score with k = ceil((n + 1)(1 - alpha)); 1.0 when k > n.
/// Throws Error(EmptyCalibration) on no scores.
double conformal_quantile(std::span<const double> scores, double alpha);

ConformalPredictor calibrate(const MlpModel& model, std::span<const FeatureVector> calibration,
                             double alpha);

/// Shortest descending prefix whose mass reaches `qhat`. Only the complete
/// ranking carries mass exactly 1, so qhat = 1 always yields every class.
PredictionSet predict_set(double qhat, const Probabilities& probs);
PredictionSet predict_set(const ConformalPredictor& predictor, const Probabilities& probs);

Diagnosis diagnose(const ConformalPredictor& predictor, const MlpModel& model,
                   const FeatureVector& feature);

/// Throws Error(DigestMismatch) when the predictor was calibrated on another model.
void check_binding(const ConformalPredictor& predictor, const MlpModel& model);

Json predictor_to_json(const ConformalPredictor& p);
ConformalPredictor predictor_from_json(const Json& j);
void save_predictor(const ConformalPredictor& p, const std::filesystem::path& path);
ConformalPredictor load_predictor(const std::filesystem::path& path);

Json diagnosis_to_json(const Diagnosis& d);

}  // namespace pmdiag
