#pragma once

#include <stdexcept>

namespace dtc {

// Thrown while loading or validating a campaign manifest. The CLI maps this
// to exit code 2.
struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a requested computation exceeds a configured size or method
// cap (Hilbert-space dimension, site count). CLI exit code 3.
struct ResourceCapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an analysis operation's input does not satisfy its
// preconditions (trace too short, too few points, empty spectrum). CLI exit
// code 4.
struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dtc
