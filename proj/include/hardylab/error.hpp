#pragma once

#include <stdexcept>
#include <string>

namespace hardylab {

// Bad input: violated preconditions, malformed specs, unknown options.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A theorem hypothesis was checked numerically and does not hold.
class HypothesisNotSatisfied : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The grid is too coarse for the requested construction.
class GridResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace hardylab
