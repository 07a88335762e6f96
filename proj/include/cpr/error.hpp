#pragma once

#include <stdexcept>
#include <string>

namespace cpr {

// Every failure the library raises maps to one of three categories; the CLI
// turns the category into its exit code.
enum class ErrorCategory {
  MissingInput,  // a referenced file does not exist
  Config,        // invalid configuration or unusable input content
  Runtime,       // anything that goes wrong while running a phase
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Malformed or empty triple / query input.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

/// Unknown entity or relation.
class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

/// A caller broke an operation's precondition (non-edge extension, empty
/// candidate set, zero-step path where one hop is required, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

/// Path extension beyond the configured hop budget.
class BudgetError : public Error {
 public:
  explicit BudgetError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what, bool missing = false)
      : Error(missing ? ErrorCategory::MissingInput : ErrorCategory::Runtime, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

/// Empty calibration set. Reported as a configuration problem.
class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

}  // namespace cpr
