#include "pmdiag/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "pmdiag/errors.hpp"
#include "pmdiag/io.hpp"

namespace pmdiag {

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double interpolate(std::span<const double> s, double x) {
  if (x <= 0.0) return s.front();
  const double last = static_cast<double>(s.size() - 1);
  if (x >= last) return s.back();
  const auto i = static_cast<std::size_t>(x);
  const double frac = x - static_cast<double>(i);
  return s[i] + frac * (s[i + 1] - s[i]);
}

}  // namespace

void PreprocessConfig::validate() const {
  if (smooth_window < 3 || smooth_window % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "smooth_window must be odd and >= 3");
  }
  if (!(active_threshold_frac > 0.0 && active_threshold_frac < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "active_threshold_frac must lie in (0, 1)");
  }
  if (!(noise_floor >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise_floor must be non-negative");
  }
  if (feature_length < 16) {
    throw Error(ErrorCode::InvalidConfig, "feature_length must be >= 16");
  }
  if (!(plateau_core_frac > 0.0 && plateau_core_frac <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "plateau_core_frac must lie in (0, 1]");
  }
}

std::vector<double> smooth(std::span<const double> samples, std::size_t window) {
  if (window % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "smoothing window must be odd");
  }
  if (window > samples.size()) {
    throw Error(ErrorCode::WindowTooLarge, "window " + std::to_string(window) +
                                               " exceeds length " + std::to_string(samples.size()));
  }
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  auto at = [&](std::ptrdiff_t i) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return samples[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(samples.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) acc += at(i + k);
    out[static_cast<std::size_t>(i)] = acc / static_cast<double>(window);
  }
  return out;
}

IndexRange detect_active_window(std::span<const double> smoothed, const PreprocessConfig& cfg) {
  if (smoothed.empty()) {
    throw Error(ErrorCode::FlatSignal, "empty signal");
  }
  const double peak = *std::max_element(smoothed.begin(), smoothed.end());
  if (!(peak > cfg.noise_floor)) {
    throw Error(ErrorCode::FlatSignal, "signal never rises above the noise floor");
  }
  const double threshold = cfg.active_threshold_frac * peak;
  IndexRange r;
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    if (smoothed[i] > threshold) {
      r.begin = i;
      break;
    }
  }
  for (std::size_t i = smoothed.size(); i-- > 0;) {
    if (smoothed[i] > threshold) {
      r.end = i + 1;
      break;
    }
  }
  return r;
}

PhaseSegmentation segment_phases(std::span<const double> smoothed, IndexRange active,
                                 const PreprocessConfig& cfg) {
  if (active.end > smoothed.size() || active.empty()) {
    throw Error(ErrorCode::InvalidArgument, "active range outside the signal");
  }
  if (active.size() < kMinManoeuvreSamples) {
    throw Error(ErrorCode::SegmentationFailed, "active window shorter than " +
                                                   std::to_string(kMinManoeuvreSamples) + " samples");
  }

  PhaseSegmentation seg;
  seg.active = active;

  const std::size_t len = active.size();
  const std::size_t core_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.plateau_core_frac * static_cast<double>(len))));
  const std::size_t core_begin = active.begin + (len - core_len) / 2;
  seg.plateau_level = median({smoothed.begin() + static_cast<std::ptrdiff_t>(core_begin),
                              smoothed.begin() + static_cast<std::ptrdiff_t>(core_begin + core_len)});
  if (!(seg.plateau_level > cfg.noise_floor)) {
    throw Error(ErrorCode::SegmentationFailed, "no positive plateau level");
  }

  const double band = kPlateauBandFactor * seg.plateau_level;
  auto in_band = [&](std::size_t i) { return smoothed[i] >= 0.0 && smoothed[i] <= band; };
  const std::size_t hold = cfg.smooth_window;

  // Unlock peak: rise above the band, then the first return that holds for `hold` samples.
  std::size_t i = active.begin;
  while (i < active.end && in_band(i)) ++i;
  if (i == active.end) {
    throw Error(ErrorCode::SegmentationFailed, "no peak rises above the plateau band");
  }
  std::size_t unlock_end = active.end;
  for (std::size_t run = 0; i < active.end; ++i) {
    run = in_band(i) ? run + 1 : 0;
    if (run == hold) {
      unlock_end = i + 1 - hold;
      break;
    }
  }
  if (unlock_end == active.end) {
    throw Error(ErrorCode::SegmentationFailed, "signal never settles after the unlock peak");
  }

  // Lock peak, mirrored from the end.
  std::size_t j = active.end;
  while (j > active.begin && in_band(j - 1)) --j;
  // j - 1 is the last sample above the band.
  std::size_t lock_begin = active.begin;
  for (std::size_t run = 0; j-- > active.begin;) {
    run = in_band(j) ? run + 1 : 0;
    if (run == hold) {
      lock_begin = j + hold;
      break;
    }
  }
  if (lock_begin == active.begin || lock_begin <= unlock_end) {
    throw Error(ErrorCode::SegmentationFailed, "no movement phase between the peaks");
  }

  seg.unlock_peak = {active.begin, unlock_end};
  seg.movement = {unlock_end, lock_begin};
  seg.lock_peak = {lock_begin, active.end};
  return seg;
}

Preprocessed preprocess_detailed(const Manoeuvre& m, const PreprocessConfig& cfg) {
  cfg.validate();
  if (auto v = validate_manoeuvre(m); !v.ok()) {
    throw Error(ErrorCode::Validation, "manoeuvre '" + m.id + "' fails " + v.describe(), 0, m.id);
  }

  Preprocessed out;
  out.smoothed = smooth(m.samples, cfg.smooth_window);
  const std::span<const double> s = out.smoothed;
  out.phases = segment_phases(s, detect_active_window(s, cfg), cfg);
  const IndexRange active = out.phases.active;

  // Refine both window edges to the interpolated threshold crossing so the
  // feature grid tracks the underlying continuous shape, not the sample grid.
  const double threshold = cfg.active_threshold_frac * *std::max_element(s.begin(), s.end());
  out.active_begin = static_cast<double>(active.begin);
  if (active.begin > 0) {
    const double lo = s[active.begin - 1];
    const double hi = s[active.begin];
    out.active_begin -= (hi - threshold) / (hi - lo);
  }
  out.active_end = static_cast<double>(active.end - 1);
  if (active.end < s.size()) {
    const double hi = s[active.end - 1];
    const double lo = s[active.end];
    out.active_end += (hi - threshold) / (hi - lo);
  }

  const double plateau = out.phases.plateau_level;
  const std::size_t len = cfg.feature_length;
  const double step = (out.active_end - out.active_begin) / static_cast<double>(len - 1);
  FeatureVector& fv = out.features;
  fv.values.resize(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double x = out.active_begin + step * static_cast<double>(k);
    fv.values[k] = std::max(0.0, interpolate(s, x) / plateau);
  }
  fv.source_id = m.id;
  fv.label = m.label;
  fv.aux.move_duration_s = static_cast<double>(out.phases.movement.size()) / m.sample_rate;
  const auto unlock = s.subspan(out.phases.unlock_peak.begin, out.phases.unlock_peak.size());
  fv.aux.peak_ratio = *std::max_element(unlock.begin(), unlock.end()) / plateau;
  return out;
}

FeatureVector preprocess(const Manoeuvre& m, const PreprocessConfig& cfg) {
  return std::move(preprocess_detailed(m, cfg).features);
}

std::vector<FeatureVector> preprocess_dataset(const Dataset& ds, const PreprocessConfig& cfg) {
  std::vector<FeatureVector> out;
  out.reserve(ds.manoeuvres.size());
  for (const auto& m : ds.manoeuvres) {
    try {
      out.push_back(preprocess(m, cfg));
    } catch (const Error& e) {
      throw Error(e.code(), "manoeuvre '" + m.id + "': " + e.what(), 0, m.id);
    }
  }
  return out;
}

std::string features_to_jsonl(std::span<const FeatureVector> features) {
  std::string out;
  for (const auto& f : features) {
    Json j;
    j["source_id"] = f.source_id;
    j["values"] = f.values;
    j["aux"] = {{"move_duration_s", f.aux.move_duration_s}, {"peak_ratio", f.aux.peak_ratio}};
    if (f.label) j["label"] = std::string(name(*f.label));
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_features(std::span<const FeatureVector> features, const std::filesystem::path& path) {
  write_file_atomic(path, features_to_jsonl(features));
}

std::vector<FeatureVector> load_features(const std::filesystem::path& path) {
  std::vector<FeatureVector> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    FeatureVector f;
    f.source_id = json_string(j, "source_id", line);
    auto values = j.find("values");
    if (values == j.end() || !values->is_array()) {
      throw Error(ErrorCode::Parse, "missing 'values' array", line);
    }
    for (const auto& v : *values) {
      if (!v.is_number()) throw Error(ErrorCode::Parse, "non-numeric feature value", line);
      f.values.push_back(v.get<double>());
    }
    if (auto aux = j.find("aux"); aux != j.end() && aux->is_object()) {
      f.aux.move_duration_s = json_number(*aux, "move_duration_s", line);
      f.aux.peak_ratio = json_number(*aux, "peak_ratio", line);
    }
    if (auto label = j.find("label"); label != j.end() && !label->is_null()) {
      auto cls = label->is_string() ? parse_fault_class(label->get<std::string>()) : std::nullopt;
      if (!cls) throw Error(ErrorCode::Parse, "unknown label", line);
      f.label = *cls;
    }
    out.push_back(std::move(f));
  });
  return out;
}

}  // namespace pmdiag
