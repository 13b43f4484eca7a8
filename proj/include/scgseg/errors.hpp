// Error types shared across the library. The CLI maps these to exit codes:
// ValidationError/ConfigError -> 1, IoError -> 2, verification failures -> 3.
#pragma once

#include <stdexcept>
#include <string>

namespace scgseg {

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/shape contract violations. A kind of validation error so callers can
// catch either level.
class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scgseg
