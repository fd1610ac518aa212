#pragma once
#include <stdexcept>
#include <string>

namespace pdx {

// Two top-level failure families, matching the CLI exit-code contract:
// validation problems (bad arguments, malformed configs, shape mismatches)
// exit with 2, numerical failures (divergence, discretization limits) with 3.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ArgumentError : ValidationError {
  explicit ArgumentError(const std::string& msg) : ValidationError(msg) {}
};

struct RangeError : ValidationError {
  explicit RangeError(const std::string& msg) : ValidationError(msg) {}
};

struct ShapeError : ValidationError {
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

struct DependencyError : ValidationError {
  explicit DependencyError(const std::string& msg) : ValidationError(msg) {}
};

struct IllPosedError : ValidationError {
  explicit IllPosedError(const std::string& msg) : ValidationError(msg) {}
};

struct UnsupportedArchitectureError : ValidationError {
  explicit UnsupportedArchitectureError(const std::string& msg) : ValidationError(msg) {}
};

struct IoError : ValidationError {
  explicit IoError(const std::string& msg) : ValidationError(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DiscretizationError : NumericError {
  explicit DiscretizationError(const std::string& msg) : NumericError(msg) {}
};

struct TrainingError : NumericError {
  explicit TrainingError(const std::string& msg) : NumericError(msg) {}
};

struct CalibrationError : NumericError {
  explicit CalibrationError(const std::string& msg) : NumericError(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

}  // namespace pdx
