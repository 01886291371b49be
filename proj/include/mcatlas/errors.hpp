#pragma once

#include <stdexcept>
#include <string>

namespace mca {

// Malformed, missing or inconsistent input data (files, sequences, ids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during evaluation or optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mca
