#pragma once

#include <stdexcept>
#include <string>

namespace dmfbs {

/// Caller violated an API precondition (bad arguments, missing data, wrong order of calls).
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Tensor shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A NaN or infinity showed up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// A dataset whose response surface is constant cannot be min-max normalized.
class DegenerateSurfaceError : public std::runtime_error {
 public:
  explicit DegenerateSurfaceError(const std::string& what) : std::runtime_error(what) {}
};

/// File could not be read or parsed.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dmfbs
