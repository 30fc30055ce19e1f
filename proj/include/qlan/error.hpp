#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qlan {

/// Failures split into two families so the CLI can map them onto distinct
/// exit codes: bad input (configuration, preconditions, invariants) versus
/// something that went wrong while running a valid scenario.
enum class ErrorCategory { Validation, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorCategory::Validation, what) {}
};

class RuntimeFailure : public Error {
 public:
  explicit RuntimeFailure(const std::string& what)
      : Error(ErrorCategory::Runtime, what) {}
};

// Fidelity is only defined here against pure targets.
class UnsupportedTargetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// No shift in the search range produced a single coincidence.
class NoPeakError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

// Epoch labels that disagree by a non-integer number of seconds.
class ClockFaultError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class IntegrityError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class AuthError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class AdmissionError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class PartialArmError : public RuntimeFailure {
 public:
  PartialArmError(const std::string& what, std::vector<std::string> missing)
      : RuntimeFailure(what), missing_(std::move(missing)) {}

  const std::vector<std::string>& missing_nodes() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Wraps an error raised inside one stage of the end-to-end pipeline. The
/// category of the original error is preserved.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.category(), "[" + stage + "] " + cause.what()),
        stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace qlan
