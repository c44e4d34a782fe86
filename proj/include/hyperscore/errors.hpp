#pragma once

#include <stdexcept>
#include <string>

namespace hyperscore {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument or configuration supplied by the caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed container, CSV, or checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Declared shapes disagree with each other or with the payload.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values are present but unusable (non-finite, unknown ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A feature row or vector whose norm is too small to normalize.
class DegenerateFeatureError : public DataError {
 public:
  using DataError::DataError;
};

// Correlation requested on inputs with zero variance.
class UndefinedCorrelationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite gradients or a failed numerical check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// 0 success, 1 usage/config, 2 data/format, 3 numerical failure.
inline int exit_code(const Error& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e))
    return 2;
  return 1;
}

}  // namespace hyperscore
