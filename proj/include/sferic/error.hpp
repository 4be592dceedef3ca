#pragma once

#include <stdexcept>
#include <string>

namespace sferic {

// Exception hierarchy. The CLI maps each kind onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter value (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or inconsistent input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedure diverged or failed to converge (exit code 4).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sferic
