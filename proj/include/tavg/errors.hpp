#pragma once

#include <stdexcept>
#include <string>

namespace tavg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller input: wrong shapes, invalid configuration values, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, corrupt or inconsistent files and datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during training or evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tavg
