#include "pmdiag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <iomanip>

#include "pmdiag/errors.hpp"

namespace pmdiag {

namespace {

template <typename T>
std::pair<std::vector<T>, std::vector<T>> take(std::span<const T> items, const SplitIndices& idx) {
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(idx.first.size());
  out.second.reserve(idx.second.size());
  for (auto i : idx.first) out.first.push_back(items[i]);
  for (auto i : idx.second) out.second.push_back(items[i]);
  return out;
}

std::vector<FaultClass> labels_of(std::span<const FeatureVector> features) {
  std::vector<FaultClass> labels;
  labels.reserve(features.size());
  for (const auto& f : features) {
    if (!f.label) {
      throw Error(ErrorCode::InvalidArgument, "unlabeled item '" + f.source_id + "'", 0, f.source_id);
    }
    labels.push_back(*f.label);
  }
  return labels;
}

double ratio_or(std::size_t num, std::size_t den, double fallback) {
  return den == 0 ? fallback : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train_frac must lie in (0, 1)");
  }
  if (!(calibration_frac_of_test > 0.0 && calibration_frac_of_test < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "calibration_frac_of_test must lie in (0, 1)");
  }
}

SplitIndices stratified_indices(std::span<const FaultClass> labels, double frac, std::uint64_t seed,
                                std::size_t min_per_class) {
  std::map<FaultClass, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<char> in_first(labels.size(), 0);
  for (auto& [cls, members] : by_class) {
    if (members.size() < min_per_class) {
      throw Error(ErrorCode::ClassTooSmall, "class " + std::string(name(cls)) + " has only " +
                                                std::to_string(members.size()) + " items");
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(code(cls))));
    std::shuffle(members.begin(), members.end(), rng);
    const auto take_n = static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * frac + 1e-9));
    for (std::size_t k = 0; k < take_n; ++k) in_first[members[k]] = 1;
  }

  SplitIndices out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (in_first[i] ? out.first : out.second).push_back(i);
  }
  return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<FaultClass> labels;
  for (const auto& m : ds.manoeuvres) {
    if (!m.label) throw Error(ErrorCode::InvalidArgument, "unlabeled manoeuvre '" + m.id + "'", 0, m.id);
    labels.push_back(*m.label);
  }
  auto idx = stratified_indices(labels, spec.train_frac, spec.seed, 2);
  auto [train, test] = take<Manoeuvre>(ds.manoeuvres, idx);
  return {Dataset{std::move(train), ds.provenance + " [train]"},
          Dataset{std::move(test), ds.provenance + " [test]"}};
}

std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> stratified_split(
    std::span<const FeatureVector> features, const SplitSpec& spec) {
  spec.validate();
  auto idx = stratified_indices(labels_of(features), spec.train_frac, spec.seed, 2);
  return take(features, idx);
}

std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> split_calibration(
    std::span<const FeatureVector> test, const SplitSpec& spec) {
  spec.validate();
  if (test.size() < 4) {
    throw Error(ErrorCode::TestTooSmall, "test set has " + std::to_string(test.size()) + " items");
  }
  auto idx = stratified_indices(labels_of(test), spec.calibration_frac_of_test,
                                derive_seed(spec.seed, 0xca1ULL));
  return take(test, idx);
}

ConfusionMatrix confusion_matrix(std::span<const LabelPair> pairs) {
  ConfusionMatrix m{};
  for (const auto& p : pairs) ++m[index(p.truth)][index(p.predicted)];
  return m;
}

BinaryMetrics binary_metrics(const ConfusionMatrix& confusion) {
  BinaryMetrics b;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      const std::size_t n = confusion[t][p];
      const bool truly_anomalous = t != index(FaultClass::Nominal);
      const bool flagged = p != index(FaultClass::Nominal);
      if (truly_anomalous && flagged) b.tp += n;
      else if (!truly_anomalous && flagged) b.fp += n;
      else if (!truly_anomalous && !flagged) b.tn += n;
      else b.fn += n;
    }
  }
  b.precision = ratio_or(b.tp, b.tp + b.fp, 1.0);
  b.fpr = ratio_or(b.fp, b.fp + b.tn, 0.0);
  b.fnr = ratio_or(b.fn, b.fn + b.tp, 0.0);
  return b;
}

BinaryMetrics binary_metrics(std::span<const LabelPair> pairs) {
  return binary_metrics(confusion_matrix(pairs));
}

CoverageResult coverage_eval(const ConformalPredictor& predictor, const MlpModel& model,
                             std::span<const FeatureVector> holdout) {
  CoverageResult r;
  if (holdout.empty()) return r;
  std::size_t covered = 0;
  std::size_t total_size = 0;
  for (const auto& f : holdout) {
    if (!f.label) throw Error(ErrorCode::InvalidArgument, "unlabeled holdout item", 0, f.source_id);
    const PredictionSet set = predict_set(predictor, forward(model, f.values));
    covered += set.contains(*f.label) ? 1 : 0;
    total_size += set.members.size();
  }
  const auto n = static_cast<double>(holdout.size());
  r.coverage = static_cast<double>(covered) / n;
  r.mean_set_size = static_cast<double>(total_size) / n;
  return r;
}

MetricsReport evaluate(const ConformalPredictor& predictor, const MlpModel& model,
                       std::span<const FeatureVector> holdout, std::vector<Diagnosis>* diagnoses) {
  MetricsReport r;
  std::vector<LabelPair> pairs;
  std::size_t covered = 0;
  std::size_t total_size = 0;
  for (const auto& f : holdout) {
    if (!f.label) throw Error(ErrorCode::InvalidArgument, "unlabeled holdout item", 0, f.source_id);
    Diagnosis d = diagnose(predictor, model, f);
    pairs.push_back({d.argmax_class, *f.label});
    covered += d.contains(*f.label) ? 1 : 0;
    total_size += d.prediction_set.size();
    if (diagnoses) diagnoses->push_back(std::move(d));
  }
  r.confusion = confusion_matrix(pairs);
  r.binary = binary_metrics(r.confusion);
  if (!holdout.empty()) {
    r.coverage = static_cast<double>(covered) / static_cast<double>(holdout.size());
    r.mean_set_size = static_cast<double>(total_size) / static_cast<double>(holdout.size());
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += r.confusion[k][c];
      actual += r.confusion[c][k];
    }
    if (predicted > 0) r.class_precision[c] = ratio_or(r.confusion[c][c], predicted, 0.0);
    if (actual > 0) r.class_recall[c] = ratio_or(r.confusion[c][c], actual, 0.0);
  }
  return r;
}

Json metrics_to_json(const MetricsReport& m) {
  Json per_class = Json::object();
  for (auto c : kAllClasses) {
    const auto& prec = m.class_precision[index(c)];
    const auto& rec = m.class_recall[index(c)];
    per_class[std::string(name(c))] = {{"precision", prec ? Json(*prec) : Json()},
                                       {"recall", rec ? Json(*rec) : Json()}};
  }
  return {{"precision", m.binary.precision},
          {"fpr", m.binary.fpr},
          {"fnr", m.binary.fnr},
          {"tp", m.binary.tp},
          {"fp", m.binary.fp},
          {"tn", m.binary.tn},
          {"fn", m.binary.fn},
          {"confusion", m.confusion},
          {"coverage", m.coverage},
          {"mean_set_size", m.mean_set_size},
          {"per_class", per_class}};
}

std::string diagnoses_csv(std::span<const Diagnosis> diagnoses, std::span<const FaultClass> truths) {
  std::ostringstream out;
  out << "id,true_label,argmax,set,probs\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < diagnoses.size(); ++i) {
    const Diagnosis& d = diagnoses[i];
    out << d.source_id << ',' << (i < truths.size() ? name(truths[i]) : "") << ','
        << name(d.argmax_class) << ',';
    for (std::size_t k = 0; k < d.prediction_set.size(); ++k) {
      out << (k ? "|" : "") << name(d.prediction_set[k].fault_class);
    }
    out << ',';
    for (std::size_t k = 0; k < d.prediction_set.size(); ++k) {
      out << (k ? "|" : "") << d.prediction_set[k].probability;
    }
    out << '\n';
  }
  return out.str();
}

void write_report(const ReportInputs& in, const std::filesystem::path& dir) {
  Json report;
  report["generated_at"] = in.timestamp;
  report["metrics"] = metrics_to_json(in.metrics);
  report["holdout_size"] = in.diagnoses.size();
  report["config"] = in.config;
  report["provenance"] = in.provenance;
  report["training_log"] = in.training_log;
  write_file_atomic(dir / "report.json", report.dump(2) + "\n");
  write_file_atomic(dir / "diagnoses.csv", diagnoses_csv(in.diagnoses, in.truths));
}

}  // namespace pmdiag
