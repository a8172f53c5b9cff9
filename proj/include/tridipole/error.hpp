#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tridipole {

enum class ErrorKind {
  InvalidInput,
  InvalidParameters,
  Configuration,
  UnusableTrace,
  Fit,
  NumericalFailure,
  SchedulingViolation,
  BudgetViolation,
  Parse,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `kind` drives CLI exit codes;
/// `stage` names the pipeline stage when the error escapes a multi-stage call.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string stage = {})
      : std::runtime_error(what), kind_(kind), stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

}  // namespace tridipole
