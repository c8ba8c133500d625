#pragma once

#include <stdexcept>
#include <string>

namespace aoi {

// Invalid model or configuration input.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An integral or series that has no finite value for the given inputs.
class DivergenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Quadrature or root finding failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aoi
