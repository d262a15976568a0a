#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pmdiag/errors.hpp"
#include "pmdiag/model.hpp"
#include "test_support.hpp"

using namespace pmdiag;

namespace {

struct Sample {
  std::vector<double> x;
  FaultClass label;
  double weight;
};

std::vector<Sample> random_samples(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> w(0.2, 3.0);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    s.x.resize(dim);
    for (auto& v : s.x) v = gauss(rng);
    s.label = fault_class_from_code(static_cast<int>(rng() % kNumClasses));
    s.weight = w(rng);
  }
  return out;
}

std::vector<BatchItem> as_batch(const std::vector<Sample>& samples) {
  std::vector<BatchItem> b;
  for (const auto& s : samples) b.push_back({s.x, s.label, s.weight});
  return b;
}

MlpModel random_model(std::vector<std::size_t> dims, std::uint64_t seed) {
  MlpModel m = init_params(dims, seed);
  // give biases nonzero values so their gradients are exercised off the origin
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& layer : m.layers)
    for (auto& b : layer.biases) b = u(rng);
  return m;
}

// Central-difference gradient check; returns the largest relative error.
double max_gradient_error(MlpModel model, const std::vector<BatchItem>& batch) {
  const double eps = 1e-5;
  const Gradients g = grad(model, batch);
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + eps;
    const double up = loss(model, batch);
    param = saved - eps;
    const double down = loss(model, batch);
    param = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t i = 0; i < model.layers[l].weights.size(); ++i)
      check(model.layers[l].weights[i], g.weights[l][i]);
    for (std::size_t i = 0; i < model.layers[l].biases.size(); ++i)
      check(model.layers[l].biases[i], g.biases[l][i]);
  }
  return worst;
}

MlpModel zero_model() {
  MlpModel m = init_params(std::vector<std::size_t>{4, 3, kNumClasses}, 1);
  for (auto& layer : m.layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
  }
  return m;
}

}  // namespace

TEST_CASE("class_weights") {
  SUBCASE("balanced counts give unit weights") {
    ClassCounts counts;
    for (auto c : kAllClasses) counts[c] = 10;
    for (double w : class_weights(counts)) CHECK(w == 1.0);
  }
  SUBCASE("training counts of the four-class MJ layout") {
    ClassCounts counts{{FaultClass::Nominal, 356},
                       {FaultClass::Obstacle, 274},
                       {FaultClass::Friction, 355},
                       {FaultClass::PowerSupply, 125}};
    const ClassWeights w = class_weights(counts);
    const double n_total = 1110.0;
    double weighted_mean = 0.0;
    for (const auto& [c, n] : counts) {
      CHECK(w[index(c)] == doctest::Approx(n_total / (4.0 * n)).epsilon(1e-15));
      weighted_mean += w[index(c)] * n;
    }
    CHECK(std::abs(weighted_mean / n_total - 1.0) < 1e-12);
    CHECK(w[index(FaultClass::Misalignment)] == 1.0);
    CHECK(w[index(FaultClass::PowerSupply)] == doctest::Approx(2.22).epsilon(1e-12));
  }
  SUBCASE("a present class with zero count is rejected") {
    ClassCounts counts{{FaultClass::Nominal, 3}, {FaultClass::Friction, 0}};
    CHECK_THROWS_AS(class_weights(counts), Error);
  }
  SUBCASE("property: weighted mean is one for random counts") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      ClassCounts counts;
      for (auto c : kAllClasses)
        if (rng() % 4) counts[c] = 1 + rng() % 1000;
      if (counts.empty()) counts[FaultClass::Nominal] = 5;
      const ClassWeights w = class_weights(counts);
      double total = 0.0, weighted = 0.0;
      for (const auto& [c, n] : counts) {
        total += static_cast<double>(n);
        weighted += w[index(c)] * static_cast<double>(n);
      }
      CHECK(std::abs(weighted / total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("init_params") {
  const std::vector<std::size_t> dims{128, 64, 32, kNumClasses};
  MlpModel a = init_params(dims, 9);
  MlpModel b = init_params(dims, 9);
  MlpModel c = init_params(dims, 10);
  CHECK(a.parameter_count() == 128 * 64 + 64 + 64 * 32 + 32 + 32 * 5 + 5);
  CHECK(a.layers[0].weights == b.layers[0].weights);
  CHECK(a.layers[0].weights != c.layers[0].weights);
  const double bound = std::sqrt(6.0 / 128.0);
  for (double w : a.layers[0].weights) CHECK((w >= -bound && w <= bound));
  for (const auto& layer : a.layers) {
    const double s = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
    for (double w : layer.weights) CHECK(std::abs(w) <= s);
    for (double bias : layer.biases) CHECK(bias == 0.0);
  }
  CHECK(a.class_names[3] == "PowerSupply");
}

TEST_CASE("forward and softmax") {
  SUBCASE("all-zero parameters give uniform probabilities") {
    const std::vector<double> x{1.0, -2.0, 3.0, 0.5};
    for (double p : forward(zero_model(), x)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("wrong input length") {
    const std::vector<double> x(3, 0.0);
    CHECK_THROWS_AS(forward(zero_model(), x), Error);
  }
  SUBCASE("property: large logits stay finite and normalized") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    for (int trial = 0; trial < 1000; ++trial) {
      std::array<double, kNumClasses> logits{};
      for (auto& z : logits) z = u(rng);
      if (trial % 7 == 0) logits[rng() % kNumClasses] = 1e4;
      const Probabilities p = softmax(logits);
      double sum = 0.0;
      for (double v : p) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  SUBCASE("moderate logits keep every probability strictly inside (0,1)") {
    const std::array<double, kNumClasses> logits{3.0, -2.0, 0.0, 7.5, -20.0};
    for (double v : softmax(logits)) CHECK((v > 0.0 && v < 1.0));
  }
}

TEST_CASE("loss examples") {
  const MlpModel m = zero_model();
  const std::vector<double> x{0.3, 0.1, -0.7, 2.0};
  const std::vector<BatchItem> one{{x, FaultClass::Friction, 1.0}};
  CHECK(loss(m, one) == doctest::Approx(-std::log(0.2)).epsilon(1e-14));
  const std::vector<BatchItem> heavy{{x, FaultClass::Friction, 2.22}};
  CHECK(loss(m, heavy) == doctest::Approx(2.22 * 1.6094379124341003).epsilon(1e-14));

  MlpModel sure = zero_model();
  sure.layers.back().biases[index(FaultClass::Obstacle)] = 60.0;
  const std::vector<BatchItem> right{{x, FaultClass::Obstacle, 1.0}};
  CHECK(loss(sure, right) <= 1e-9);
  sure.layers.back().biases[index(FaultClass::Obstacle)] = 1e4;
  const std::vector<BatchItem> wrong{{x, FaultClass::Nominal, 1.0}};
  CHECK(loss(sure, wrong) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("gradient matches central differences") {
  SUBCASE("full architecture, 10-item batch, model seed 3") {
    std::mt19937_64 rng(3);
    auto samples = random_samples(rng, 10, 128);
    const MlpModel m = random_model({128, 64, 32, kNumClasses}, 3);
    CHECK(max_gradient_error(m, as_batch(samples)) < 1e-4);
  }
  SUBCASE("20 random model/batch trials") {
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::size_t> dims{2 + rng() % 14};
      const std::size_t hidden = 1 + rng() % 3;
      for (std::size_t h = 0; h < hidden; ++h) dims.push_back(2 + rng() % 12);
      dims.push_back(kNumClasses);
      auto samples = random_samples(rng, 1 + rng() % 12, dims.front());
      const MlpModel m = random_model(dims, rng());
      worst = std::max(worst, max_gradient_error(m, as_batch(samples)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient linearity") {
  std::mt19937_64 rng(21);
  const MlpModel m = random_model({6, 5, kNumClasses}, 4);
  auto samples = random_samples(rng, 4, 6);

  SUBCASE("zero-weight items contribute nothing") {
    auto base = as_batch(samples);
    const Gradients g_base = grad(m, base);
    auto padded = samples;
    auto extra = random_samples(rng, 3, 6);
    for (auto& e : extra) e.weight = 0.0;
    padded.insert(padded.end(), extra.begin(), extra.end());
    const Gradients g_pad = grad(m, as_batch(padded));
    // the mean divides by 7 instead of 4
    for (std::size_t l = 0; l < g_base.weights.size(); ++l)
      for (std::size_t i = 0; i < g_base.weights[l].size(); ++i)
        CHECK(g_pad.weights[l][i] * 7.0 == doctest::Approx(g_base.weights[l][i] * 4.0));
  }
  SUBCASE("duplicating an item doubles its contribution") {
    std::vector<Sample> single{samples[0]};
    std::vector<Sample> rest(samples.begin() + 1, samples.end());
    auto with_dup = samples;
    with_dup.push_back(samples[0]);
    const Gradients g1 = grad(m, as_batch(single));
    const Gradients g_rest = grad(m, as_batch(rest));
    const Gradients g_dup = grad(m, as_batch(with_dup));
    for (std::size_t l = 0; l < g1.weights.size(); ++l)
      for (std::size_t i = 0; i < g1.weights[l].size(); ++i) {
        const double expected = (2.0 * g1.weights[l][i] + 3.0 * g_rest.weights[l][i]) / 5.0;
        CHECK(g_dup.weights[l][i] == doctest::Approx(expected).epsilon(1e-12));
      }
  }
  SUBCASE("scaling all weights scales loss and gradient") {
    auto scaled = samples;
    for (auto& s : scaled) s.weight *= 4.0;
    CHECK(loss(m, as_batch(scaled)) == doctest::Approx(4.0 * loss(m, as_batch(samples))));
    const Gradients g = grad(m, as_batch(samples));
    const Gradients g4 = grad(m, as_batch(scaled));
    for (std::size_t l = 0; l < g.biases.size(); ++l)
      for (std::size_t i = 0; i < g.biases[l].size(); ++i)
        CHECK(g4.biases[l][i] == doctest::Approx(4.0 * g.biases[l][i]).epsilon(1e-12));
  }
}

namespace {

std::vector<FeatureVector> separable_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.3);
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector f;
    const bool positive = i % 2 == 0;
    f.values.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) f.values[k] = gauss(rng) + (k == 0 ? (positive ? 2.0 : -2.0) : 0.0);
    f.label = positive ? FaultClass::Friction : FaultClass::Nominal;
    f.source_id = "s" + std::to_string(i);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

TEST_CASE("training on a separable two-class set") {
  const auto data = separable_set(40, 8, 77);
  TrainConfig cfg;
  cfg.layer_dims = {8, 8, kNumClasses};
  cfg.epochs = 200;
  cfg.batch_size = 8;
  const TrainResult r = train(data, cfg);
  REQUIRE(r.epoch_loss.size() == 200);
  std::size_t correct = 0;
  for (const auto& f : data) correct += predict(r.model, f.values).label == *f.label;
  CHECK(correct == data.size());
  for (std::size_t e = 151; e < 200; ++e) CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1] + 1e-6);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("training preconditions and determinism") {
  auto data = separable_set(20, 4, 3);
  TrainConfig cfg;
  cfg.layer_dims = {4, 6, kNumClasses};
  cfg.epochs = 15;

  SUBCASE("single class is degenerate") {
    auto one = data;
    for (auto& f : one) f.label = FaultClass::Nominal;
    CHECK_THROWS_AS(train(one, cfg), Error);
  }
  SUBCASE("unlabeled feature is rejected") {
    data[4].label.reset();
    CHECK_THROWS_AS(train(data, cfg), Error);
  }
  SUBCASE("dimension mismatch") {
    cfg.layer_dims = {5, 6, kNumClasses};
    CHECK_THROWS_AS(train(data, cfg), Error);
  }
  SUBCASE("bit-reproducible for a fixed seed") {
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    CHECK(model_digest(a.model) == model_digest(b.model));
    CHECK(a.epoch_loss == b.epoch_loss);
    cfg.seed += 1;
    CHECK(model_digest(train(data, cfg).model) != model_digest(a.model));
  }
  SUBCASE("config invariants") {
    TrainConfig bad = cfg;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.class_weights[2] = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("argmax ties go to the lowest code") {
  CHECK(argmax({0.3, 0.3, 0.2, 0.1, 0.1}) == FaultClass::Nominal);
  CHECK(argmax({0.1, 0.2, 0.3, 0.3, 0.1}) == FaultClass::Friction);
  CHECK(argmax({0.2, 0.2, 0.2, 0.2, 0.2}) == FaultClass::Nominal);
}

TEST_CASE("model serialization") {
  TempDir dir;
  MlpModel m = random_model({7, 4, kNumClasses}, 12);
  m.train_config = TrainConfig{};
  m.dataset_digest = "abc";
  save_model(m, dir / "m.json");
  const MlpModel back = load_model(dir / "m.json");
  CHECK(model_digest(back) == model_digest(m));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    CHECK(back.layers[l].weights == m.layers[l].weights);
    CHECK(back.layers[l].biases == m.layers[l].biases);
  }
  CHECK(back.dataset_digest == "abc");

  Json j = model_to_json(m);
  j["weights"][0][0] = 123.0;
  try {
    model_from_json(j);
    FAIL("tampered model accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DigestMismatch);
  }
}
