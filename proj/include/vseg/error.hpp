#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

/// Bad argument, inconsistent geometry or an invalid configuration.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vseg
