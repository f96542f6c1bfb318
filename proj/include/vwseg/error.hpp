#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vwseg {

enum class ErrorCode {
  ParseError,
  SizeMismatch,
  InvalidContour,
  IoError,
  DegenerateContour,
  EmptyMask,
  ContainmentViolation,
  NoAnnotations,
  ImageTooSmall,
  BoxOutOfBounds,
  PointOutOfPatch,
  ShapeError,
  GraphError,
  ConfigError,
  NoData,
  DivergenceError,
  NoPrior,
  EmptyGroundTruth,
  EmptyContour,
  MismatchError,
  NonFinite,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can print a stable, machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vwseg
