#pragma once

#include <stdexcept>
#include <string>

namespace slicenet {

/// Broad failure categories. The CLI maps each category onto a process exit code.
enum class ErrorKind {
  kConfig,     // invalid configuration: bad rates, non-divisible widths, unknown presets
  kDimension,  // tensor shape disagreement
  kData,       // malformed or out-of-range data
  kUsage,      // API misuse: wrong call order, cache misses, non-scalar loss
  kNumeric,    // non-finite values during training
  kBudget,     // compute budget below the base network cost
  kIo,         // unreadable or unwritable files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error(ErrorKind::kDimension, m) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error(ErrorKind::kData, m) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& m) : Error(ErrorKind::kUsage, m) {}
};

/// Raised when a scheduled subnet produces a non-finite loss.
class NumericError : public Error {
 public:
  NumericError(const std::string& m, double rate)
      : Error(ErrorKind::kNumeric, m), rate_(rate) {}
  double rate() const noexcept { return rate_; }

 private:
  double rate_;
};

class BudgetInfeasibleError : public Error {
 public:
  explicit BudgetInfeasibleError(const std::string& m) : Error(ErrorKind::kBudget, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

/// Exit codes: 0 success, 2 config/usage, 3 data/io, 4 numeric failure.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace slicenet
