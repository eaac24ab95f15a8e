#pragma once

#include <stdexcept>
#include <string>

namespace selqr {

/// Malformed or inconsistent user input (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed: rank loss, singular matrix, no convergence
/// (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace selqr
