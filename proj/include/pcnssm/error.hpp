#pragma once

#include <stdexcept>
#include <string>

namespace pcnssm {

// Shape or dimension disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An operation that needs at least one element received none.
struct EmptySetError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller violated a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct BoundsError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Point configuration without enough spatial extent for the requested fit.
struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced NaN/Inf.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pcnssm
