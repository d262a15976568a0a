#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdiag/core.hpp"

namespace pmdiag {

struct PreprocessConfig {
  std::size_t smooth_window = 5;  // odd, >= 3
  double active_threshold_frac = 0.1;
  double noise_floor = 1e-6;  // amps
  std::size_t feature_length = 128;
  double plateau_core_frac = 0.5;

  void validate() const;
};

/// Samples within this factor of the plateau level count as "on the plateau"
/// when locating the ends of the two peaks.
inline constexpr double kPlateauBandFactor = 1.15;

/// Half-open index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  bool operator==(const IndexRange&) const = default;
};

struct PhaseSegmentation {
  IndexRange active;
  IndexRange unlock_peak;
  IndexRange movement;
  IndexRange lock_peak;
  double plateau_level = 0.0;  // amps
};

struct FeatureAux {
  double move_duration_s = 0.0;
  double peak_ratio = 0.0;  // unlock peak max / plateau level
};

/// Fixed-length, plateau-normalised shape of one manoeuvre. `label` is passed
/// through from the source manoeuvre when known.
struct FeatureVector {
  std::vector<double> values;
  std::string source_id;
  FeatureAux aux;
  std::optional<FaultClass> label;
};

/// Centred moving average with mirrored edges (x[-k] = x[k]).
/// Throws Error(WindowTooLarge) when window > samples.size().
std::vector<double> smooth(std::span<const double> samples, std::size_t window);

/// [first, last + 1) over samples above active_threshold_frac * max.
/// Throws Error(FlatSignal) when max <= noise_floor.
IndexRange detect_active_window(std::span<const double> smoothed, const PreprocessConfig& cfg);

/// Splits the active window into unlock peak, movement and lock peak.
/// Throws Error(SegmentationFailed) when any phase would be empty.
PhaseSegmentation segment_phases(std::span<const double> smoothed, IndexRange active,
                                 const PreprocessConfig& cfg);

struct Preprocessed {
  FeatureVector features;
  PhaseSegmentation phases;
  std::vector<double> smoothed;
  // Sub-sample positions where the smoothed trace crosses the activity
  // threshold; the feature grid spans [active_begin, active_end].
  double active_begin = 0.0;
  double active_end = 0.0;
};

Preprocessed preprocess_detailed(const Manoeuvre& m, const PreprocessConfig& cfg);
FeatureVector preprocess(const Manoeuvre& m, const PreprocessConfig& cfg);

/// Preprocesses every manoeuvre; failures are rethrown with the manoeuvre id attached.
std::vector<FeatureVector> preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg);

std::string features_to_jsonl(std::span<const FeatureVector> features);
void save_features(std::span<const FeatureVector> features, const std::filesystem::path& path);
std::vector<FeatureVector> load_features(const std::filesystem::path& path);

}  // namespace pmdiag
