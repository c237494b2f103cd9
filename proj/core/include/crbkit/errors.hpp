#pragma once

#include <stdexcept>

namespace crb {

// Base class for all crbkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A factorization hit a non-positive pivot, or a positive-definiteness
// check failed.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

// An MM iteration increased the objective, falsifying the majorization
// precondition (P >= J in the PSD sense).
class MonotonicityViolation : public Error {
 public:
  using Error::Error;
};

// A fixed-step iteration left the stability region.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A step-size parameter violates its validity bound (e.g. Landweber nu).
class InvalidStep : public Error {
 public:
  using Error::Error;
};

// The right-hand side is not in the range of a singular matrix: the
// residual stalled above the configured range tolerance.
class NotInRange : public Error {
 public:
  using Error::Error;
};

// Constraint gradient H does not have full column rank.
class RankDeficientConstraints : public Error {
 public:
  using Error::Error;
};

// The reduced Fisher matrix U^T J U is singular.
class SingularReducedFisher : public Error {
 public:
  using Error::Error;
};

// Starting point violates the equality constraints.
class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

// A series truncation rule could not be satisfied within its cap.
class TruncationError : public Error {
 public:
  using Error::Error;
};

// File could not be read or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

// A condition that should be unreachable for valid inputs.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace crb
