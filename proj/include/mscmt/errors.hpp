#pragma once

#include <stdexcept>
#include <string>

namespace mscmt {

// CLI exit code 1: bad flags, malformed or inconsistent configuration.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CLI exit code 2: unreadable or invalid input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CLI exit code 3: numeric failure (NaN loss, diverged training).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contract violation on tensor/image extents.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace mscmt
