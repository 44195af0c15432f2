#pragma once

#include <stdexcept>
#include <string>

namespace headprune {

// Every error raised by the library derives from Error. The CLI maps
// UsageError/DataError/ConfigError to exit code 1 and anything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or hyperparameter inconsistency.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

/// Malformed or insufficient input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data error: " + what) {}
};

/// API misuse (bad argument, wrong call order).
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage error: " + what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training error: " + what) {}
};

class ScoringError : public Error {
 public:
  explicit ScoringError(const std::string& what) : Error("scoring error: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("i/o error: " + what) {}
};

/// Checkpoint decoding failure; `kind()` distinguishes the cause.
class CheckpointError : public Error {
 public:
  enum class Kind { kVersion, kShape, kTruncated, kCorrupt, kFormat };

  CheckpointError(Kind kind, const std::string& what)
      : Error("checkpoint error: " + what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace headprune
