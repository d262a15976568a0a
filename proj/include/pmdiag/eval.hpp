#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmdiag/conformal.hpp"

namespace pmdiag {

struct SplitSpec {
  double train_frac = 0.8;
  double calibration_frac_of_test = 0.5;
  std::uint64_t seed = 11;

  void validate() const;
};

/// Index partition of a labeled collection.
struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Per label, floor(n_c * frac) members (seeded shuffle within the label) go to
/// `first` and the rest to `second`. Both lists keep the input order.
/// With `min_per_class` > 0, a label with fewer members raises ClassTooSmall.
SplitIndices stratified_indices(std::span<const FaultClass> labels, double frac, std::uint64_t seed,
                                std::size_t min_per_class = 0);

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec);
std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> stratified_split(
    std::span<const FeatureVector> features, const SplitSpec& spec);

/// Stratified calibration/holdout halves of a test set. Throws TestTooSmall below 4 items.
std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> split_calibration(
    std::span<const FeatureVector> test, const SplitSpec& spec);

struct LabelPair {
  FaultClass predicted;
  FaultClass truth;
};

/// Rows are true classes, columns predictions.
using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

ConfusionMatrix confusion_matrix(std::span<const LabelPair> pairs);

/// Anomaly-vs-nominal view: "positive" is any non-Nominal class.
struct BinaryMetrics {
  double precision = 1.0;
  double fpr = 0.0;
  double fnr = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

BinaryMetrics binary_metrics(std::span<const LabelPair> pairs);
BinaryMetrics binary_metrics(const ConfusionMatrix& confusion);

struct CoverageResult {
  double coverage = 0.0;
  double mean_set_size = 0.0;
};

CoverageResult coverage_eval(const ConformalPredictor& predictor, const MlpModel& model,
                             std::span<const FeatureVector> holdout);

struct MetricsReport {
  BinaryMetrics binary;
  ConfusionMatrix confusion{};
  double coverage = 0.0;
  double mean_set_size = 0.0;
  // Empty when the class never occurs among predictions (precision) or labels (recall).
  std::array<std::optional<double>, kNumClasses> class_precision;
  std::array<std::optional<double>, kNumClasses> class_recall;
};

/// Diagnoses every labeled holdout item and summarises classification and coverage.
MetricsReport evaluate(const ConformalPredictor& predictor, const MlpModel& model,
                       std::span<const FeatureVector> holdout, std::vector<Diagnosis>* diagnoses = nullptr);

Json metrics_to_json(const MetricsReport& m);

struct ReportInputs {
  MetricsReport metrics;
  std::vector<Diagnosis> diagnoses;
  std::vector<FaultClass> truths;  // parallel to diagnoses
  std::vector<double> training_log;
  Json config;
  Json provenance;
  std::string timestamp;
};

/// Writes report.json and diagnoses.csv into `dir`.
void write_report(const ReportInputs& inputs, const std::filesystem::path& dir);

std::string diagnoses_csv(std::span<const Diagnosis> diagnoses, std::span<const FaultClass> truths);

}  // namespace pmdiag
