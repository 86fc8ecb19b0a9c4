#pragma once

#include <stdexcept>
#include <string>

namespace lad {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (ragged rows, unreadable file).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input violates a value-level invariant (non-finite cell, bad hyperparameter).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input has the wrong shape (too few rows, dimension mismatch).
class SizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical breakdown, e.g. a matrix that stays indefinite after jitter.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace lad
