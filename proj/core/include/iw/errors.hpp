#pragma once

#include <stdexcept>
#include <string>

namespace iw {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Geometric input is singular or too close to singular (parallel 6D
/// columns, non-invertible affine, ...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A continuous sampling coordinate fell outside the grid.
class OutOfBounds : public Error {
 public:
  using Error::Error;
};

/// Tensor operands have incompatible shapes; the message carries both.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A pose tagged with one pixel space was passed where another was expected.
class SpaceMismatch : public Error {
 public:
  using Error::Error;
};

/// A numeric configuration value is out of its valid range.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// A point with non-positive depth cannot be projected; message lists indices.
class BehindCamera : public Error {
 public:
  using Error::Error;
};

/// Structured-text input could not be parsed; message names line and field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Run configuration is inconsistent with the data it is applied to.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The scene sampler could not satisfy its constraints within the retry cap.
class RetryExhausted : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace iw
