#pragma once

#include <stdexcept>
#include <string>

namespace ksamp {

// Bad arguments, shapes or configuration. Maps to CLI exit code 2.
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Factorization failures, non-convergence, overflow. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Raised when an operator violates a stability precondition (projection
// kernel, Stein equations).
class StabilityError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

} // namespace detail
} // namespace ksamp
