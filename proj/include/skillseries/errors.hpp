#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skillseries {

/// Base of every library error. `exit_code()` maps onto the CLI contract:
/// 1 usage/config, 2 data, 3 numeric failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class BadParam : public UsageError {
 public:
  using UsageError::UsageError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// data

class MalformedRow : public DataError {
 public:
  MalformedRow(std::size_t line, const std::string& what)
      : DataError("malformed row at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyFile : public DataError {
 public:
  using DataError::DataError;
};

class UnknownGesture : public DataError {
 public:
  using DataError::DataError;
};

class OverlapError : public DataError {
 public:
  using DataError::DataError;
};

class MissingMeta : public DataError {
 public:
  using DataError::DataError;
};

class LabelInconsistency : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateTrial : public DataError {
 public:
  using DataError::DataError;
};

// features

class SignalTooShort : public DataError {
 public:
  SignalTooShort(const std::string& what, std::ptrdiff_t channel = -1)
      : DataError(channel >= 0 ? "channel " + std::to_string(channel) + ": " + what : what),
        channel_(channel) {}
  std::ptrdiff_t channel() const noexcept { return channel_; }

 private:
  std::ptrdiff_t channel_;
};

class TooFewFrames : public DataError {
 public:
  using DataError::DataError;
};

// reduce / models / fusion

class DegenerateInput : public NumericError {
 public:
  using NumericError::NumericError;
};

class DimMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

class EmptyModel : public UsageError {
 public:
  using UsageError::UsageError;
};

class NoConvergence : public NumericError {
 public:
  NoConvergence(const std::string& what, std::size_t iterations, double gap)
      : NumericError(what + " (iterations=" + std::to_string(iterations) +
                     ", gap=" + std::to_string(gap) + ")"),
        iterations_(iterations),
        gap_(gap) {}
  std::size_t iterations() const noexcept { return iterations_; }
  double gap() const noexcept { return gap_; }

 private:
  std::size_t iterations_;
  double gap_;
};

class OrderMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

class TooFewSurgeons : public DataError {
 public:
  using DataError::DataError;
};

// highlights

class WindowTooLarge : public UsageError {
 public:
  WindowTooLarge(const std::string& what, std::size_t max_window)
      : UsageError(what + " (largest admissible window: " + std::to_string(max_window) + ")"),
        max_window_(max_window) {}
  std::size_t max_window() const noexcept { return max_window_; }

 private:
  std::size_t max_window_;
};

class BadRange : public UsageError {
 public:
  using UsageError::UsageError;
};

class PipelineFamilyMismatch : public UsageError {
 public:
  using UsageError::UsageError;
};

// eval

class InsufficientTrials : public DataError {
 public:
  explicit InsufficientTrials(const std::string& what) : DataError("InsufficientTrials: " + what) {}
};

/// Wraps another library error with context (fold, trial) and keeps its
/// exit code. The original is reachable through std::rethrow_if_nested.
class ContextError : public Error {
 public:
  ContextError(const std::string& context, const Error& inner)
      : Error(context + ": " + inner.what()), code_(inner.exit_code()) {}
  int exit_code() const noexcept override { return code_; }

 private:
  int code_;
};

}  // namespace skillseries
