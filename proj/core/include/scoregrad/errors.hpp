#pragma once

#include <stdexcept>
#include <string>

namespace scoregrad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (rejected before any computation).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of a function (e.g. diffusion time).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or hit a singularity.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace scoregrad
