#pragma once

#include <stdexcept>
#include <string>

namespace sgn {

// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A precondition of an operation was violated (empty input, wrong variant, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgn
