#pragma once

#include <stdexcept>
#include <string>

namespace ewmlab {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf reached an operation boundary.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (empty memory, missing region, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem or serialization failure; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ewmlab
