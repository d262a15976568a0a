#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pmdiag/conformal.hpp"
#include "pmdiag/errors.hpp"
#include "pmdiag/model.hpp"
#include "test_support.hpp"

using namespace pmdiag;

namespace {

std::vector<FaultClass> members(const PredictionSet& s) {
  std::vector<FaultClass> out;
  for (const auto& m : s.members) out.push_back(m.fault_class);
  return out;
}

Probabilities random_probs(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.6, 1.0);
  Probabilities p{};
  double total = 0.0;
  for (auto& v : p) total += (v = g(rng) + 1e-12);
  for (auto& v : p) v /= total;
  return p;
}

// Every prefix of the descending order, shortest one whose mass reaches qhat.
std::vector<FaultClass> shortest_prefix(const Probabilities& p, double qhat) {
  std::vector<int> order(kNumClasses);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
  for (std::size_t len = 1; len <= kNumClasses; ++len) {
    double mass = 0.0;
    for (std::size_t k = 0; k < len; ++k) mass += p[order[k]];
    if (len == kNumClasses || (qhat < 1.0 && mass >= qhat)) {
      std::vector<FaultClass> out;
      for (std::size_t k = 0; k < len; ++k) out.push_back(fault_class_from_code(order[k]));
      return out;
    }
  }
  return {};
}

ErrorCode error_code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected pmdiag::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("aps_score examples") {
  const Probabilities p{0.6, 0.3, 0.06, 0.03, 0.01};
  CHECK(aps_score(p, FaultClass::Obstacle) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(aps_score(p, FaultClass::Nominal) == 0.6);
  CHECK(aps_score(p, FaultClass::Misalignment) == 1.0);
  const Probabilities tied{0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK(aps_score(tied, FaultClass::Nominal) == 0.2);
  CHECK(aps_score(tied, FaultClass::Misalignment) == 1.0);
}

TEST_CASE("bad distributions are rejected") {
  const Probabilities short_sum{0.5, 0.3, 0.1, 0.05, 0.04};
  CHECK(error_code_of([&] { aps_score(short_sum, FaultClass::Nominal); }) ==
        ErrorCode::BadDistribution);
  const Probabilities negative{1.1, -0.1, 0.0, 0.0, 0.0};
  CHECK(error_code_of([&] { predict_set(0.5, negative); }) == ErrorCode::BadDistribution);
  const Probabilities nan{std::nan(""), 0.5, 0.5, 0.0, 0.0};
  CHECK(error_code_of([&] { predict_set(0.5, nan); }) == ErrorCode::BadDistribution);
}

TEST_CASE("property: score range") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const Probabilities p = random_probs(rng);
    const auto order = rank_classes(p);
    for (auto c : kAllClasses) {
      const double s = aps_score(p, c);
      CHECK((s > 0.0 && s <= 1.0));
      CHECK((s == 1.0) == (c == order.back()));
    }
  }
}

TEST_CASE("conformal quantile") {
  SUBCASE("order statistic") {
    std::vector<double> scores;
    for (int i = 1; i <= 10; ++i) scores.push_back(i / 10.0);
    CHECK(conformal_quantile(scores, 0.5) == 0.6);
  }
  SUBCASE("n = 19 takes the largest score") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    std::vector<double> scores(19);
    for (auto& s : scores) s = u(rng);
    CHECK(conformal_quantile(scores, 0.05) == *std::max_element(scores.begin(), scores.end()));
  }
  SUBCASE("n = 10 clamps to one") {
    const std::vector<double> scores(10, 0.3);
    CHECK(conformal_quantile(scores, 0.05) == 1.0);
  }
  SUBCASE("property: matches an integer-arithmetic order statistic") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng() % 200;
      const int alpha_pct = 1 + static_cast<int>(rng() % 98);
      std::vector<double> scores(n);
      for (auto& s : scores) s = u(rng);
      // k = ceil((n + 1)(100 - a) / 100) in exact integers
      const std::size_t num = (n + 1) * static_cast<std::size_t>(100 - alpha_pct);
      const std::size_t k = (num + 99) / 100;
      double expected = 1.0;
      if (k <= n) {
        auto sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        expected = sorted[std::max<std::size_t>(k, 1) - 1];
      }
      CHECK(conformal_quantile(scores, alpha_pct / 100.0) == expected);
    }
  }
  SUBCASE("empty") {
    CHECK(error_code_of([] { conformal_quantile({}, 0.1); }) == ErrorCode::EmptyCalibration);
  }
}

TEST_CASE("predict_set examples") {
  const Probabilities sharp{0.90, 0.05, 0.03, 0.01, 0.01};
  PredictionSet s = predict_set(0.85, sharp);
  CHECK(members(s) == std::vector<FaultClass>{FaultClass::Nominal});
  CHECK(s.singleton);
  CHECK(s.argmax_class == FaultClass::Nominal);

  const Probabilities split{0.60, 0.30, 0.06, 0.03, 0.01};
  s = predict_set(0.85, split);
  CHECK(members(s) == std::vector<FaultClass>{FaultClass::Nominal, FaultClass::Obstacle});
  CHECK_FALSE(s.singleton);
  CHECK(s.members[1].probability == 0.30);

  s = predict_set(1.0, sharp);
  CHECK(s.members.size() == kNumClasses);
  // even when the first four classes already carry all the mass
  const Probabilities saturated{0.5, 0.5, 0.0, 0.0, 0.0};
  CHECK(predict_set(1.0, saturated).members.size() == kNumClasses);
}

TEST_CASE("property: brute-force equivalence, monotonicity, nonemptiness") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Probabilities p = random_probs(rng);
    if (trial % 9 == 0) {
      p[1] = p[3];
      const double total = std::accumulate(p.begin(), p.end(), 0.0);
      for (auto& v : p) v /= total;
    }
    const double q = trial % 50 == 0 ? 1.0 : 1.0 - u(rng);
    const PredictionSet s = predict_set(q, p);
    CHECK(members(s) == shortest_prefix(p, q));
    CHECK(s.contains(argmax(p)));
    CHECK(s.argmax_class == argmax(p));
    for (std::size_t i = 1; i < s.members.size(); ++i)
      CHECK(s.members[i - 1].probability >= s.members[i].probability);
    const double q2 = q + (1.0 - q) * u(rng);
    const PredictionSet wider = predict_set(q2, p);
    for (const auto& m : s.members) CHECK(wider.contains(m.fault_class));
  }
}

TEST_CASE("calibrate, diagnose and binding") {
  const MlpModel model = init_params(std::vector<std::size_t>{6, 4, kNumClasses}, 8);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FeatureVector> cal(40);
  for (std::size_t i = 0; i < cal.size(); ++i) {
    cal[i].values.resize(6);
    for (auto& v : cal[i].values) v = g(rng);
    cal[i].label = fault_class_from_code(static_cast<int>(i % kNumClasses));
    cal[i].source_id = "cal" + std::to_string(i);
  }
  const ConformalPredictor p = calibrate(model, cal, 0.1);
  CHECK(p.n_calibration == 40);
  CHECK(p.model_digest == model_digest(model));
  std::vector<double> scores;
  for (const auto& f : cal) scores.push_back(aps_score(forward(model, f.values), *f.label));
  std::sort(scores.begin(), scores.end());
  CHECK(p.qhat == scores[36]);  // ceil(41 * 0.9) = 37

  const Diagnosis d = diagnose(p, model, cal[3]);
  CHECK(d.source_id == "cal3");
  CHECK(d.alpha == 0.1);
  CHECK(d.guarantee() == doctest::Approx(0.9));
  CHECK(!d.prediction_set.empty());
  CHECK(d.contains(d.argmax_class));
  const Json j = diagnosis_to_json(d);
  CHECK(j.at("source_id") == "cal3");

  CHECK_NOTHROW(check_binding(p, model));
  const MlpModel other = init_params(std::vector<std::size_t>{6, 4, kNumClasses}, 9);
  CHECK(error_code_of([&] { check_binding(p, other); }) == ErrorCode::DigestMismatch);

  std::vector<FeatureVector> none;
  CHECK(error_code_of([&] { calibrate(model, none, 0.1); }) == ErrorCode::EmptyCalibration);

  TempDir dir;
  save_predictor(p, dir / "p.json");
  const ConformalPredictor back = load_predictor(dir / "p.json");
  CHECK(back.qhat == p.qhat);
  CHECK(back.alpha == p.alpha);
  CHECK(back.n_calibration == p.n_calibration);
  CHECK(back.model_digest == p.model_digest);
}

TEST_CASE("an uninformative model yields all-class sets") {
  MlpModel model = init_params(std::vector<std::size_t>{3, 3, kNumClasses}, 1);
  for (auto& layer : model.layers) std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
  std::vector<FeatureVector> cal(30);
  for (std::size_t i = 0; i < cal.size(); ++i) {
    cal[i].values = {1.0, 2.0, static_cast<double>(i)};
    cal[i].label = fault_class_from_code(static_cast<int>(i % kNumClasses));
  }
  const ConformalPredictor p = calibrate(model, cal, 0.05);
  CHECK(p.qhat == 1.0);
  FeatureVector x;
  x.values = {0.0, 0.0, 0.0};
  CHECK(diagnose(p, model, x).prediction_set.size() == kNumClasses);
}
