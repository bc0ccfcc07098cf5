#pragma once

#include <stdexcept>
#include <string>

namespace gloss {

// Precondition violations (bad shapes, out-of-range ids, bad hyperparameters).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed GTAR archives and other on-disk inputs.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Arithmetic produced NaN/Inf or a factorization broke down.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gloss
