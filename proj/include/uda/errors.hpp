#pragma once

#include <stdexcept>
#include <string>

namespace uda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A batch is too small for the statistic requested of it (e.g. covariance
/// with fewer than two rows).
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// An argument violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A class index or similar lies outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (CSV cells, checkpoint files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally inconsistent input (ragged rows, wrong header).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace uda
