#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gatevio {

enum class ErrorCode {
  BehindCamera,
  NoConvergence,
  DegenerateProjection,
  NonMonotonicTimestamp,
  ExcessiveDt,
  EmptyStream,
  SingularNormalEquations,
  NoOverlap,
  InvalidSpec,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. Callers that treat a failure
/// as routine (e.g. a corner behind the camera) should prefer the `try_*`
/// variants that return std::optional instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gatevio
