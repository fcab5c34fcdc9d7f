#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eulerflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input matrix is not a rotation (orthonormality / determinant check failed).
struct InvalidRotation : Error {
  using Error::Error;
};

// Parameter outside its admissible set (e.g. Mobius center on or outside the unit circle).
struct InvalidParameter : Error {
  using Error::Error;
};

// An iterative solve did not reach its bracket/tolerance contract.
struct ConvergenceFailure : Error {
  using Error::Error;
};

// Buffer/vector size does not match what the callee expects.
struct ShapeMismatch : Error {
  using Error::Error;
};

// Workspace or optimizer state does not correspond to the object it is used with.
struct StateMismatch : Error {
  using Error::Error;
};

// Unrecognized enum/string tag (dataset kind, density mode, ...).
struct UnknownKind : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// File has a valid magic but a version this build does not read.
struct FormatVersionMismatch : Error {
  using Error::Error;
};

// File is structurally damaged (bad magic, truncation, invalid record payload).
struct CorruptRecord : Error {
  using Error::Error;
};

// Training loss became NaN/Inf; batch_index records the offending iteration.
struct NonFiniteLoss : Error {
  std::size_t batch_index = 0;
  NonFiniteLoss(const std::string& msg, std::size_t index)
      : Error(msg), batch_index(index) {}
};

}  // namespace eulerflow
