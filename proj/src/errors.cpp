#include "dmvr/errors.hpp"

namespace dmvr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::UnknownOutcome: return "UnknownOutcome";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EmptyTarget: return "EmptyTarget";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::MalformedSequence: return "MalformedSequence";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::EmptyFilteredSet: return "EmptyFilteredSet";
    case ErrorCode::ContextMismatch: return "ContextMismatch";
    case ErrorCode::EmptyCounts: return "EmptyCounts";
    case ErrorCode::MissingReport: return "MissingReport";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace dmvr
