#pragma once

#include <stdexcept>
#include <string>

namespace onerel {

// Bad input data: malformed files, out-of-range spans, unknown relations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent arguments or shapes handed to an API.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values during training or scoring.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace onerel
