#pragma once

#include <stdexcept>
#include <string>

namespace proxflow {

// Two families: bad inputs (ValidationError) and numerical breakdown
// (NumericError). The CLI maps them to exit codes 1 and 2.

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Drift matrix is not Hurwitz, or the (A, B) pair is not controllable.
class StabilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Requested propagation mode does not match the structure of the system.
class ModeMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Eigenvalue at or below the positivity floor.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A first-order covariance step left the SPD cone; retry with a smaller h.
class StepSizeError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// The brute-force minimizer did not converge.
class OracleFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace proxflow
