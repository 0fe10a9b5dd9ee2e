#pragma once

#include <stdexcept>

namespace mufuru {

// Error taxonomy shared across the library. The CLI maps each class to a
// distinct process exit code.

/// Operand shapes are incompatible with the requested operation.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A value-level precondition on an argument was violated.
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of a function (e.g. log of <= 0).
struct MathDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed structured input (token patterns, record syntax).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Semantically invalid dataset content.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem / stream failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A verification gate failed (gradient check, equivalence check, divergence).
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mufuru
