#pragma once

#include <stdexcept>
#include <string>

namespace sec {

// Caller broke a documented precondition (shape mismatch, bad index, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or insufficient input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, degenerate decompositions and other numerical failures.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank-deficient input to the nuclear-norm gradient.
class DegenerateSubgradientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace sec
