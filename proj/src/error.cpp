#include "otsforge/error.hpp"

namespace otsforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingTable: return "MissingTable";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnsupportedCostModel: return "UnsupportedCostModel";
    case ErrorCode::InvalidCase: return "InvalidCase";
    case ErrorCode::NoRefBus: return "NoRefBus";
    case ErrorCode::DuplicateRefBus: return "DuplicateRefBus";
    case ErrorCode::NonpositiveThetaBound: return "NonpositiveThetaBound";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::InfeasibleDemand: return "InfeasibleDemand";
    case ErrorCode::NoIncumbent: return "NoIncumbent";
    case ErrorCode::InfeasibleForward: return "InfeasibleForward";
    case ErrorCode::SingularKkt: return "SingularKkt";
    case ErrorCode::StaleSolution: return "StaleSolution";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::YieldTooLow: return "YieldTooLow";
    case ErrorCode::AllForwardsInfeasible: return "AllForwardsInfeasible";
    case ErrorCode::FallbackAlsoInfeasible: return "FallbackAlsoInfeasible";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace otsforge
