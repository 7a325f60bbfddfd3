#pragma once

#include <stdexcept>
#include <string>

namespace delaycert {

/// Mismatched matrix/vector shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A certification precondition does not hold (e.g. matrix not Hurwitz,
/// decay rate outside the admissible range).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Pole placement failed (uncontrollable pair or no usable parameter matrix).
struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input expected to be symmetric is not.
struct SymmetryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A standing assumption of the spectral model is violated
/// (e.g. an unstable residual mode).
struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// State became non-finite during integration.
struct DivergenceError : std::runtime_error {
  double time;
  explicit DivergenceError(double t)
      : std::runtime_error("state diverged at t = " + std::to_string(t)), time(t) {}
};

}  // namespace delaycert
