#pragma once

#include <stdexcept>
#include <string>

namespace volseg {

/// Bad input: malformed files, shape mismatches, out-of-range settings.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a failed numerical check.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace volseg
