#pragma once

#include <stdexcept>
#include <string>

namespace tvae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not conform for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf values, or a step that would produce them.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an API (wrong mode, non-scalar loss, reused tape).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration values or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tvae
