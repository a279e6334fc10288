#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmvr {

enum class ErrorCode {
  ZeroMass,
  NegativeWeight,
  UnknownOutcome,
  SpaceMismatch,
  DomainError,
  EmptyTarget,
  BudgetExceeded,
  MalformedSequence,
  NonFiniteGradient,
  GroupTooSmall,
  EmptyFilteredSet,
  ContextMismatch,
  EmptyCounts,
  MissingReport,
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dmvr
