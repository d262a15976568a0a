#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pmdiag {

/// Fault taxonomy. Integer codes are part of every file format; never reorder.
enum class FaultClass : int {
  Nominal = 0,
  Obstacle = 1,
  Friction = 2,
  PowerSupply = 3,
  Misalignment = 4,
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<FaultClass, kNumClasses> kAllClasses{
    FaultClass::Nominal, FaultClass::Obstacle, FaultClass::Friction, FaultClass::PowerSupply,
    FaultClass::Misalignment};

constexpr int code(FaultClass c) noexcept { return static_cast<int>(c); }
constexpr std::size_t index(FaultClass c) noexcept { return static_cast<std::size_t>(c); }

/// Throws Error(InvalidArgument) outside 0..4.
FaultClass fault_class_from_code(int code);
std::string_view name(FaultClass c) noexcept;
std::optional<FaultClass> parse_fault_class(std::string_view name) noexcept;

enum class Supply { AC, DC };

std::string_view name(Supply s) noexcept;
std::optional<Supply> parse_supply(std::string_view name) noexcept;

struct TechnologyProfile {
  std::string name;
  Supply supply = Supply::AC;
  double sample_rate = 100.0;  // samples per second
  double nominal_peak_amps = 8.0;
  double plateau_amps = 3.0;
  double move_duration = 5.0;  // seconds

  /// Throws Error(InvalidConfig) naming the first broken invariant.
  void validate() const;
};

// Desk-scale stand-ins for the three machine families. The magnitudes are
// illustrative; only their three-phase shape matters downstream.
TechnologyProfile mj_profile();
TechnologyProfile p80_profile();
TechnologyProfile ebiswitch_profile();
std::optional<TechnologyProfile> profile_by_name(std::string_view name);

/// One blade movement: a current trace in amps sampled at `sample_rate`.
struct Manoeuvre {
  std::string id;
  std::string technology;
  double timestamp = 0.0;  // seconds since epoch
  std::vector<double> samples;
  double sample_rate = 0.0;
  std::optional<FaultClass> label;

  bool operator==(const Manoeuvre&) const = default;
};

inline constexpr std::size_t kMinManoeuvreSamples = 32;

enum class ValidationRule { Ok, TooShort, NonFiniteSample, BadSampleRate };

struct ValidationResult {
  ValidationRule rule = ValidationRule::Ok;
  std::size_t index = 0;  // offending sample for NonFiniteSample

  bool ok() const noexcept { return rule == ValidationRule::Ok; }
  std::string describe() const;
  bool operator==(const ValidationResult&) const = default;
};

/// Total: never throws. Rules are checked in order length, finiteness, rate.
ValidationResult validate_manoeuvre(const Manoeuvre& m) noexcept;

struct Dataset {
  std::vector<Manoeuvre> manoeuvres;
  std::string provenance;
};

/// Reads a JSONL dataset. Errors: Io, Parse (line), Validation (id), DuplicateId (id).
/// The provenance of the result is the source path.
Dataset load_dataset(const std::filesystem::path& path);

/// Writes one JSON object per manoeuvre, atomically. Doubles are written in
/// shortest round-trip form, so load_dataset reproduces them bit for bit.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

std::string dataset_to_jsonl(const Dataset& ds);

}  // namespace pmdiag
