#pragma once

#include <stdexcept>
#include <string>

namespace vads {

// Error taxonomy mapped to distinct CLI exit codes:
// ParseError -> 2, ValidationError -> 3, ConfigError -> 4.
// DimensionError is a shape-level validation failure.

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace vads
