#include "pmdiag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pmdiag/errors.hpp"

namespace pmdiag {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTimestampOrigin = 1.7e9;
constexpr double kTimestampSpacing = 60.0;

double rising_cosine(double u) noexcept { return 0.5 * (1.0 - std::cos(kPi * u)); }
double falling_cosine(double u) noexcept { return 0.5 * (1.0 + std::cos(kPi * u)); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SynthConfig::validate() const {
  profile.validate();
  if (!(unlock_peak_duration > 0.0) || !(lock_peak_duration > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "peak durations must be positive");
  }
  if (!(unlock_peak_duration + lock_peak_duration < 2.0 * profile.move_duration)) {
    throw Error(ErrorCode::InvalidConfig, "peak durations too long for the movement duration");
  }
  if (!(noise_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise_sigma must be non-negative");
  }
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "amplitude_jitter must lie in [0, 1)");
  }
  if (!(duration_jitter >= 0.0 && duration_jitter < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "duration_jitter must lie in [0, 1)");
  }
  if (!(idle_duration >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "idle_duration must be non-negative");
  }
}

void FaultSpec::validate() const {
  if (fault_class == FaultClass::Nominal) {
    throw Error(ErrorCode::InvalidFault, "cannot inject a Nominal fault");
  }
  if (!(severity >= 0.0 && severity <= 1.0)) {
    throw Error(ErrorCode::InvalidFault, "severity must lie in [0, 1]");
  }
  if (obstacle_position && !(*obstacle_position >= 0.1 && *obstacle_position <= 0.9)) {
    throw Error(ErrorCode::InvalidFault, "obstacle_position must lie in [0.1, 0.9]");
  }
}

double ripple_frequency_hz(Supply supply) noexcept {
  return 2.0 * (supply == Supply::AC ? 0.3 : 0.25);
}

double TraceShape::base_value_at(double t) const noexcept {
  double tau = t - idle;
  if (tau <= 0.0) return 0.0;

  const double outer = kOuterFlankFraction * unlock_duration;
  if (tau < outer) return peak_amps * rising_cosine(tau / outer);
  if (tau < unlock_duration) {
    double u = (tau - outer) / (unlock_duration - outer);
    return plateau_amps + (peak_amps - plateau_amps) * falling_cosine(u);
  }
  tau -= unlock_duration;

  if (tau < move_duration) {
    double v = plateau_amps;
    if (bump_amps > 0.0) {
      double d = tau - bump_center;
      if (std::abs(d) < 0.5 * bump_width) {
        v += bump_amps * 0.5 * (1.0 + std::cos(2.0 * kPi * d / bump_width));
      }
    }
    return v;
  }
  tau -= move_duration;

  const double inner = (1.0 - kOuterFlankFraction) * lock_duration;
  if (tau < inner) return plateau_amps + (lock_peak_amps - plateau_amps) * rising_cosine(tau / inner);
  if (tau < lock_duration) return lock_peak_amps * falling_cosine((tau - inner) / (lock_duration - inner));
  return 0.0;
}

double TraceShape::value_at(double t) const noexcept {
  double base = base_value_at(t);
  double v = gain * base;
  if (ripple_amps != 0.0) {
    // Ripple rides on the energised part of the trace only.
    double envelope = std::clamp(base / plateau_amps, 0.0, 1.0);
    v += ripple_amps * envelope * std::sin(2.0 * kPi * ripple_hz * (t - idle) + ripple_phase);
  }
  return v;
}

TraceShape draw_nominal_shape(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> symmetric(-1.0, 1.0);
  const double amp_scale = 1.0 + cfg.amplitude_jitter * symmetric(rng);
  const double dur_scale = 1.0 + cfg.duration_jitter * symmetric(rng);

  TraceShape s;
  s.idle = cfg.idle_duration;
  s.unlock_duration = cfg.unlock_peak_duration;
  s.lock_duration = cfg.lock_peak_duration;
  s.move_duration = cfg.profile.move_duration * dur_scale;
  s.peak_amps = cfg.profile.nominal_peak_amps * amp_scale;
  s.plateau_amps = cfg.profile.plateau_amps * amp_scale;
  s.lock_peak_amps = kLockPeakRatio * s.peak_amps;
  return s;
}

void apply_fault(TraceShape& s, const FaultSpec& spec, const SynthConfig& cfg, Rng& rng) {
  spec.validate();
  const double sev = spec.severity;
  switch (spec.fault_class) {
    case FaultClass::Obstacle: {
      double pos = spec.obstacle_position
                       ? *spec.obstacle_position
                       : std::uniform_real_distribution<double>(0.1, 0.9)(rng);
      s.bump_amps = (0.5 + 1.5 * sev) * s.plateau_amps;
      s.bump_width = (0.05 + 0.15 * sev) * s.move_duration;
      s.bump_center = pos * s.move_duration;
      break;
    }
    case FaultClass::Friction:
      s.plateau_amps *= 1.0 + 0.2 + 0.4 * sev;
      break;
    case FaultClass::PowerSupply: {
      s.gain = 1.0 - 0.2 - 0.3 * sev;
      s.ripple_hz = ripple_frequency_hz(cfg.profile.supply);
      s.ripple_amps = 0.05 * sev * s.gain * s.peak_amps;
      s.ripple_phase = spec.ripple_phase.value_or(0.0);
      break;
    }
    case FaultClass::Misalignment:
      s.lock_duration *= 1.0 + 2.0 * sev;
      s.lock_peak_amps *= 1.0 - 0.3 * sev;
      s.move_duration += 0.2 * sev * cfg.profile.move_duration;
      break;
    case FaultClass::Nominal:
      break;  // rejected by validate()
  }
}

std::vector<double> render(const TraceShape& shape, double sample_rate, double noise_sigma,
                           std::uint64_t noise_seed) {
  const auto n = static_cast<std::size_t>(std::floor(shape.total_duration() * sample_rate + 0.5)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = shape.value_at(static_cast<double>(i) / sample_rate);
  }
  if (noise_sigma > 0.0) {
    Rng noise_rng(noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : out) v += noise(noise_rng);
  }
  return out;
}

Synthesized synthesize_nominal(const SynthConfig& cfg, Rng& rng) {
  Synthesized out;
  out.shape = draw_nominal_shape(cfg, rng);
  const std::uint64_t noise_seed = rng();
  out.manoeuvre.id = "synth";
  out.manoeuvre.technology = cfg.profile.name;
  out.manoeuvre.sample_rate = cfg.profile.sample_rate;
  out.manoeuvre.samples = render(out.shape, cfg.profile.sample_rate, cfg.noise_sigma, noise_seed);
  out.manoeuvre.label = FaultClass::Nominal;
  return out;
}

Synthesized synthesize_fault(const SynthConfig& cfg, const FaultSpec& spec, Rng& rng) {
  spec.validate();
  Synthesized out;
  out.shape = draw_nominal_shape(cfg, rng);
  const std::uint64_t noise_seed = rng();
  apply_fault(out.shape, spec, cfg, rng);
  out.manoeuvre.id = "synth";
  out.manoeuvre.technology = cfg.profile.name;
  out.manoeuvre.sample_rate = cfg.profile.sample_rate;
  out.manoeuvre.samples = render(out.shape, cfg.profile.sample_rate, cfg.noise_sigma, noise_seed);
  out.manoeuvre.label = spec.fault_class;
  return out;
}

Manoeuvre generate_nominal(const SynthConfig& cfg, Rng& rng) {
  return synthesize_nominal(cfg, rng).manoeuvre;
}

Manoeuvre inject_fault(const SynthConfig& cfg, const FaultSpec& spec, Rng& rng) {
  return synthesize_fault(cfg, spec, rng).manoeuvre;
}

Dataset generate_dataset(const ClassCounts& counts, const SynthConfig& cfg, SeverityRange range,
                         std::uint64_t seed) {
  cfg.validate();
  if (!(range.lo >= 0.0 && range.lo <= range.hi && range.hi <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "severity range must satisfy 0 <= lo <= hi <= 1");
  }
  Dataset ds;
  for (const auto& [cls, count] : counts) {
    const std::uint64_t class_seed = derive_seed(seed, static_cast<std::uint64_t>(code(cls)));
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(class_seed, i));
      Manoeuvre m;
      if (cls == FaultClass::Nominal) {
        m = generate_nominal(cfg, rng);
      } else {
        FaultSpec spec;
        spec.fault_class = cls;
        spec.severity = std::uniform_real_distribution<double>(range.lo, range.hi)(rng);
        m = inject_fault(cfg, spec, rng);
      }
      m.id = "synth-" + std::string(name(cls)) + "-" + std::to_string(i);
      ds.manoeuvres.push_back(std::move(m));
    }
  }
  Rng shuffler(derive_seed(seed, 0x5eedULL));
  std::shuffle(ds.manoeuvres.begin(), ds.manoeuvres.end(), shuffler);
  for (std::size_t k = 0; k < ds.manoeuvres.size(); ++k) {
    ds.manoeuvres[k].timestamp = kTimestampOrigin + kTimestampSpacing * static_cast<double>(k);
  }
  ds.provenance = "synth:" + cfg.profile.name + " seed=" + std::to_string(seed);
  return ds;
}

}  // namespace pmdiag
