#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>

#include "pmdiag/core.hpp"

namespace pmdiag {

using Rng = std::mt19937_64;
using ClassCounts = std::map<FaultClass, std::size_t>;

/// Mixes a seed with a stream index into an independent 64-bit seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

struct SynthConfig {
  TechnologyProfile profile = mj_profile();
  double unlock_peak_duration = 0.8;  // seconds
  double lock_peak_duration = 0.8;    // seconds
  double noise_sigma = 0.0;           // amps
  double amplitude_jitter = 0.1;      // +- fraction applied to both peak and plateau
  double duration_jitter = 0.05;      // +- fraction applied to the movement phase
  double idle_duration = 0.5;         // de-energised lead-in and tail, seconds
  std::uint64_t seed = 42;

  void validate() const;
};

struct FaultSpec {
  FaultClass fault_class = FaultClass::Obstacle;
  double severity = 0.5;
  // Obstacle centre as a fraction of the movement phase; drawn from [0.1, 0.9] when unset.
  std::optional<double> obstacle_position;
  // PowerSupply ripple phase in radians, measured from energisation; 0 when unset.
  std::optional<double> ripple_phase;

  void validate() const;
};

/// Ripple frequency used by PowerSupply faults: twice the supply's
/// characteristic fluctuation frequency (0.3 Hz for AC, 0.25 Hz for DC).
double ripple_frequency_hz(Supply supply) noexcept;

/// Continuous-time current curve of one manoeuvre. Rendering samples it on a
/// grid; tests use it directly as the analytic ground truth.
///
/// Layout after `idle` seconds of zero current:
///   unlock peak  rise 0 -> peak (raised cosine), fall peak -> plateau
///   movement     constant plateau, optionally with an obstacle bump
///   lock peak    rise plateau -> lock peak, fall lock peak -> 0
/// followed by `idle` seconds of zero current. Every junction is C1.
struct TraceShape {
  double idle = 0.5;
  double unlock_duration = 0.8;
  double move_duration = 5.0;
  double lock_duration = 0.8;
  double peak_amps = 8.0;
  double plateau_amps = 3.0;
  double lock_peak_amps = 7.2;

  double gain = 1.0;
  double ripple_amps = 0.0;
  double ripple_hz = 0.0;
  double ripple_phase = 0.0;

  double bump_amps = 0.0;
  double bump_center = 0.0;  // seconds from movement start
  double bump_width = 0.0;

  double energized_duration() const noexcept {
    return unlock_duration + move_duration + lock_duration;
  }
  double total_duration() const noexcept { return energized_duration() + 2.0 * idle; }
  double movement_begin() const noexcept { return idle + unlock_duration; }
  double movement_end() const noexcept { return movement_begin() + move_duration; }
  double energized_end() const noexcept { return idle + energized_duration(); }

  /// Curve value without noise at time `t` seconds from trace start.
  double value_at(double t) const noexcept;
  /// Same curve before gain and ripple are applied.
  double base_value_at(double t) const noexcept;
};

// Fraction of each peak spent on its outer flank (0 <-> peak); the inner flank
// (peak <-> plateau) takes the rest.
inline constexpr double kOuterFlankFraction = 0.7;
// Lock peak height relative to the unlock peak on a healthy machine.
inline constexpr double kLockPeakRatio = 0.9;

TraceShape draw_nominal_shape(const SynthConfig& cfg, Rng& rng);

/// Deforms `shape` in place. Throws Error(InvalidFault) for Nominal.
void apply_fault(TraceShape& shape, const FaultSpec& spec, const SynthConfig& cfg, Rng& rng);

/// Samples `shape` at `sample_rate`, adding N(0, noise_sigma) noise drawn from
/// an engine seeded with `noise_seed`.
std::vector<double> render(const TraceShape& shape, double sample_rate, double noise_sigma,
                           std::uint64_t noise_seed);

Manoeuvre generate_nominal(const SynthConfig& cfg, Rng& rng);
Manoeuvre inject_fault(const SynthConfig& cfg, const FaultSpec& spec, Rng& rng);

/// Both generators consume the engine identically up to the fault draws, so a
/// nominal and a faulty manoeuvre produced from equal engine states are twins:
/// same jitter, same noise sequence. These variants also return the shape.
struct Synthesized {
  Manoeuvre manoeuvre;
  TraceShape shape;
};
Synthesized synthesize_nominal(const SynthConfig& cfg, Rng& rng);
Synthesized synthesize_fault(const SynthConfig& cfg, const FaultSpec& spec, Rng& rng);

struct SeverityRange {
  double lo = 0.3;
  double hi = 1.0;
};

/// Exactly `counts[c]` manoeuvres per class with ids "synth-<Class>-<i>",
/// severities uniform in `range`, shuffled with `seed`. Each manoeuvre draws
/// from its own engine seeded by (seed, class, i), so output does not depend
/// on generation order.
Dataset generate_dataset(const ClassCounts& counts, const SynthConfig& cfg, SeverityRange range,
                         std::uint64_t seed);

}  // namespace pmdiag
