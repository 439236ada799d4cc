#pragma once

#include <stdexcept>
#include <string>

namespace scf {

// Error taxonomy mirrors the CLI exit-code contract:
//   ValidationError -> 1, IoError -> 2, NumericError -> 3.

class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scf
