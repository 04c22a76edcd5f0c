#pragma once

#include <stdexcept>
#include <string>

namespace msinv {

// Base class for everything thrown on purpose by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violations: bad sizes, out-of-range ids, invalid parameters.
struct InvalidArgument : Error {
  using Error::Error;
};

// A fracture segment collapses to a single lattice vertex after snapping.
struct DegenerateFracture : Error {
  using Error::Error;
};

// Element-level assembly failures (non-positive triangle area and friends).
struct AssemblyError : Error {
  using Error::Error;
};

// Linear solver did not converge or the operator is not SPD.
struct SolverError : Error {
  using Error::Error;
};

// Local eigenvalue problem could not be solved to tolerance.
struct SpectralError : Error {
  using Error::Error;
};

// A vertex neighborhood has no interior fine vertices.
struct DegenerateNeighborhood : Error {
  using Error::Error;
};

// Flux direction system for a coarse cell is numerically singular.
struct FluxRecoveryError : Error {
  using Error::Error;
};

// An operation was invoked on a stale or unprepared inversion state.
struct StateError : Error {
  using Error::Error;
};

// Config file parsing / validation failures; carries file and line context.
struct ConfigError : Error {
  using Error::Error;
};

// Gradient step rejected: the updated mass operator lost positive
// definiteness and step halving was disabled or exhausted.
struct StepRejected : Error {
  using Error::Error;
};

} // namespace msinv
