#pragma once

#include <stdexcept>
#include <string>

namespace pseudopde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (grid, clock, generator, solver settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to an operation (non-finite point, grid mismatch, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Arithmetic domain violation while evaluating an expression.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: NaN in a field, rank-deficient regression, ...
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A configured resource budget would be exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Feature outside what the library supports (e.g. infinite-activity kernels).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace pseudopde
