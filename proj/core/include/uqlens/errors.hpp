#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace uqlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values, flags, or serialized documents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input dimensionality does not satisfy an operation's requirements.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Data cannot support the requested statistic (zero variance, no usable pairs).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Model evaluation failed; carries the offending row index when known.
class EvalError : public Error {
 public:
  explicit EvalError(const std::string& what, std::optional<std::size_t> row = std::nullopt)
      : Error(what), row_(row) {}

  std::optional<std::size_t> row() const { return row_; }

 private:
  std::optional<std::size_t> row_;
};

// A study aborted because too many evaluation points failed.
class StudyError : public Error {
 public:
  using Error::Error;
};

}  // namespace uqlens
