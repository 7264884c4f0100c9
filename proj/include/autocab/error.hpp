#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace autocab {

enum class ErrorCode {
  UnknownSignal,
  ReadOnlySignal,
  TypeMismatch,
  NonPositiveDt,
  OutOfBounds,
  UnknownIndex,
  NotATextField,
  UnknownQueryKind,
  PreconditionViolated,
  ParseError,
  DuplicateId,
  InvalidBinding,
  GeoMismatch,
  UnknownRegion,
  TaskNotFound,
  SessionInactive,
  DigestMismatch,
  BindFailure,
  NoJsonFound,
  SchemaViolation,
  UnknownSomIndex,
  ModalityViolation,
  OracleStuck,
  EmptyTraceSet,
  AgentFailure,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the whole library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace autocab
