#pragma once

#include <stdexcept>
#include <string>

namespace calcx {

// Dimension / geometry contract violations (mismatched shapes, windows
// that cannot fit, kernels larger than the image).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values and configuration contract violations.
struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem and codec failures; message carries the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where the numeric contract requires finite ones
// (e.g. a NaN training loss).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace calcx
