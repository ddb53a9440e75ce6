#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxelseg {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  InvalidK,
  IoError,
  UnsupportedDatatype,
  CorruptHeader,
  DimensionalityError,
  MissingSidecar,
  ShapeMismatch,
  InvalidVolume,
  WrongIntensityKind,
  DegenerateRange,
  CoverageGap,
  IndivisibleShape,
  NonFiniteGradient,
  IndexOutOfRange,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on kind, not text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Input/configuration problems, as opposed to failures while running.
  bool is_validation() const noexcept {
    return code_ == ErrorCode::InvalidArgument || code_ == ErrorCode::ConfigError ||
           code_ == ErrorCode::InvalidK;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace voxelseg
