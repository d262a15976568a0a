#include "pmdiag/core.hpp"

#include <cmath>
#include <unordered_set>

#include "pmdiag/errors.hpp"
#include "pmdiag/io.hpp"

namespace pmdiag {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "Nominal", "Obstacle", "Friction", "PowerSupply", "Misalignment"};

Json manoeuvre_to_json(const Manoeuvre& m) {
  Json j;
  j["id"] = m.id;
  j["technology"] = m.technology;
  j["timestamp"] = m.timestamp;
  j["sample_rate"] = m.sample_rate;
  j["samples"] = m.samples;
  if (m.label) {
    j["label"] = std::string(name(*m.label));
  }
  return j;
}

Manoeuvre manoeuvre_from_json(const Json& j, std::size_t line) {
  Manoeuvre m;
  m.id = json_string(j, "id", line);
  m.technology = json_string(j, "technology", line);
  m.timestamp = json_number(j, "timestamp", line);
  m.sample_rate = json_number(j, "sample_rate", line);
  auto samples = j.find("samples");
  if (samples == j.end() || !samples->is_array()) {
    throw Error(ErrorCode::Parse, "missing 'samples' array", line);
  }
  m.samples.reserve(samples->size());
  for (const auto& v : *samples) {
    if (!v.is_number()) {
      throw Error(ErrorCode::Parse, "non-numeric sample", line);
    }
    m.samples.push_back(v.get<double>());
  }
  if (auto label = j.find("label"); label != j.end() && !label->is_null()) {
    if (!label->is_string()) {
      throw Error(ErrorCode::Parse, "'label' must be a string", line);
    }
    auto cls = parse_fault_class(label->get<std::string>());
    if (!cls) {
      throw Error(ErrorCode::Parse, "unknown label '" + label->get<std::string>() + "'", line);
    }
    m.label = *cls;
  }
  return m;
}

}  // namespace

FaultClass fault_class_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumClasses)) {
    throw Error(ErrorCode::InvalidArgument, "fault class code out of range: " + std::to_string(code));
  }
  return static_cast<FaultClass>(code);
}

std::string_view name(FaultClass c) noexcept { return kClassNames[index(c)]; }

std::optional<FaultClass> parse_fault_class(std::string_view s) noexcept {
  for (auto c : kAllClasses) {
    if (kClassNames[index(c)] == s) return c;
  }
  return std::nullopt;
}

std::string_view name(Supply s) noexcept { return s == Supply::AC ? "AC" : "DC"; }

std::optional<Supply> parse_supply(std::string_view s) noexcept {
  if (s == "AC") return Supply::AC;
  if (s == "DC") return Supply::DC;
  return std::nullopt;
}

void TechnologyProfile::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw Error(ErrorCode::InvalidConfig, "sample_rate must be positive");
  }
  if (!(plateau_amps > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "plateau_amps must be positive");
  }
  if (!(nominal_peak_amps > plateau_amps)) {
    throw Error(ErrorCode::InvalidConfig, "nominal_peak_amps must exceed plateau_amps");
  }
  if (!(move_duration > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "move_duration must be positive");
  }
}

TechnologyProfile mj_profile() { return {"MJ", Supply::AC, 100.0, 8.0, 3.0, 5.0}; }
TechnologyProfile p80_profile() { return {"P80", Supply::DC, 100.0, 6.0, 2.2, 4.0}; }
TechnologyProfile ebiswitch_profile() { return {"EbiSwitch", Supply::AC, 100.0, 10.0, 3.8, 6.0}; }

std::optional<TechnologyProfile> profile_by_name(std::string_view n) {
  if (n == "MJ") return mj_profile();
  if (n == "P80") return p80_profile();
  if (n == "EbiSwitch") return ebiswitch_profile();
  return std::nullopt;
}

std::string ValidationResult::describe() const {
  switch (rule) {
    case ValidationRule::Ok: return "ok";
    case ValidationRule::TooShort: return "TooShort";
    case ValidationRule::NonFiniteSample: return "NonFiniteSample(" + std::to_string(index) + ")";
    case ValidationRule::BadSampleRate: return "BadSampleRate";
  }
  return "unknown";
}

ValidationResult validate_manoeuvre(const Manoeuvre& m) noexcept {
  if (m.samples.size() < kMinManoeuvreSamples) {
    return {ValidationRule::TooShort, 0};
  }
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    if (!std::isfinite(m.samples[i])) {
      return {ValidationRule::NonFiniteSample, i};
    }
  }
  if (!(m.sample_rate > 0.0) || !std::isfinite(m.sample_rate)) {
    return {ValidationRule::BadSampleRate, 0};
  }
  return {};
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset ds;
  ds.provenance = path.string();
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    Manoeuvre m = manoeuvre_from_json(j, line);
    if (auto v = validate_manoeuvre(m); !v.ok()) {
      throw Error(ErrorCode::Validation, "manoeuvre '" + m.id + "' fails " + v.describe(), line,
                  m.id);
    }
    if (!seen.insert(m.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id '" + m.id + "'", line, m.id);
    }
    ds.manoeuvres.push_back(std::move(m));
  });
  return ds;
}

std::string dataset_to_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& m : ds.manoeuvres) {
    out += manoeuvre_to_json(m).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_jsonl(ds));
}

}  // namespace pmdiag
