#pragma once

#include <stdexcept>

namespace dpo {

/// Base for domain failures. Invalid *construction* input throws
/// std::invalid_argument instead; these mean a well-formed request hit a
/// region where the requested computation is not defined.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-form evaluation inside a guard band around a vanishing denominator.
struct SingularRegime : Error {
  using Error::Error;
};

/// Steady state requested while the drift spectrum touches the imaginary axis.
struct Unstable : Error {
  using Error::Error;
};

/// Reduced expression requested outside its domain of validity.
struct FormMismatch : Error {
  using Error::Error;
};

/// Fixed-step integrator asked to run above its step-size cap.
struct StepTooLarge : Error {
  using Error::Error;
};

/// Dense steady-moment solve hit a numerically singular system.
struct SingularSolve : Error {
  using Error::Error;
};

/// Root search: objective never crosses the target on the interval.
struct NoCrossing : Error {
  using Error::Error;
};

/// Optimum search: guard bands exclude the whole bracket.
struct BracketSingular : Error {
  using Error::Error;
};

/// Every grid point of a request was skipped (singular or unstable).
struct AllPointsSingular : Error {
  using Error::Error;
};

}  // namespace dpo
