#pragma once

#include <stdexcept>
#include <string>

namespace cabin {

// Error taxonomy. Each type maps to one machine-parsable CLI failure class
// (see cli.cpp); library code throws, the CLI translates.

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rejected configuration: unknown key, bad value, stride arithmetic that
// cannot produce the requested output length.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between tensors.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input too small for the requested operation (conv window, sequence cap).
struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sequence assembly violations: out-of-order or duplicated stream segments.
struct LayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset integrity: schema version, checksum, empty split, missing docs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or violated numeric contracts at runtime.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; a bug, not a user error.
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cabin
