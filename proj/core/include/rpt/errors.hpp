#pragma once

#include <stdexcept>
#include <string>

namespace rpt {

/// Invalid user-supplied parameters or malformed input data.
struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A spatial mask with no (or numerically negligible) mass where mass is required.
struct EmptyMaskError : std::runtime_error {
  explicit EmptyMaskError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A prototype with zero norm cannot drive a cosine-based prediction.
struct DegeneratePrototypeError : std::runtime_error {
  explicit DegeneratePrototypeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value produced inside a forward/backward pass.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Episode sampling ran out of candidate slices for a class.
struct ExhaustionError : std::runtime_error {
  explicit ExhaustionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// I/O failure (missing file, bad format).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rpt
