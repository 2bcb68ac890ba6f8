#pragma once

#include <stdexcept>
#include <string>

namespace mixedreg {

// Invalid model/constraint/hypothesis specification or malformed input.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-finite input, failed factorization, overflow.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mixedreg
