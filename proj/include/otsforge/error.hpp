#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otsforge {

enum class ErrorCode {
  MissingTable,
  MalformedRow,
  UnsupportedCostModel,
  InvalidCase,
  NoRefBus,
  DuplicateRefBus,
  NonpositiveThetaBound,
  DimensionMismatch,
  NumericalBreakdown,
  InfeasibleDemand,
  NoIncumbent,
  InfeasibleForward,
  SingularKkt,
  StaleSolution,
  StaleCache,
  YieldTooLow,
  AllForwardsInfeasible,
  FallbackAlsoInfeasible,
  FingerprintMismatch,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace otsforge
