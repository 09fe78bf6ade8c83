#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltvs {

/// Base class of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes are inconsistent with the declared dimensions.
struct DimensionError : Error {
  using Error::Error;
};

/// A factorization or solve failed (singular or indefinite matrix).
struct NumericalError : Error {
  using Error::Error;
};

/// Malformed configuration or command-line usage.
struct ConfigError : Error {
  using Error::Error;
};

/// The H-infinity information matrix lost positive definiteness; the
/// performance parameter is too aggressive for this step.
struct InfeasibilityError : Error {
  std::ptrdiff_t step;
  InfeasibilityError(const std::string& msg, std::ptrdiff_t step_index)
      : Error(msg), step(step_index) {}
};

/// Simulation produced a non-finite state.
struct DivergenceError : Error {
  std::ptrdiff_t step;
  DivergenceError(const std::string& msg, std::ptrdiff_t step_index)
      : Error(msg), step(step_index) {}
};

/// The fault-information matrix is singular or too ill-conditioned to
/// invert; the fault vector cannot be estimated from the data so far.
struct NotIdentifiableError : Error {
  using Error::Error;
};

/// Fewer records than the requested window.
struct InsufficientDataError : Error {
  using Error::Error;
};

/// Onset scan found no candidate with an invertible information matrix.
struct NoCandidateError : Error {
  using Error::Error;
};

}  // namespace ltvs
