#pragma once

#include <stdexcept>
#include <string>

namespace kws {

// Malformed or unusable input data (files, formats, manifests).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric breakdown at runtime (diverged training, non-finite loss).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Label sequence cannot fit in the given number of frames.
struct CtcInfeasible : std::runtime_error {
  explicit CtcInfeasible(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kws
