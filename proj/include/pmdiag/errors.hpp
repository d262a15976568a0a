#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pmdiag {

enum class ErrorCode {
  InvalidConfig,
  InvalidArgument,
  Io,
  Parse,
  Validation,
  DuplicateId,
  InvalidFault,
  WindowTooLarge,
  FlatSignal,
  SegmentationFailed,
  EmptyClass,
  DimensionMismatch,
  DegenerateData,
  BadDistribution,
  EmptyCalibration,
  ClassTooSmall,
  TestTooSmall,
  DigestMismatch,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. `code()` names the failure; `line()`
/// and `id()` carry the location when one exists (file line, manoeuvre id).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::size_t line = 0, std::string id = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        line_(line),
        id_(std::move(id)) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& id() const noexcept { return id_; }

 private:
  ErrorCode code_;
  std::size_t line_;
  std::string id_;
};

}  // namespace pmdiag
