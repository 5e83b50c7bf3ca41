#pragma once

#include <stdexcept>
#include <string>

namespace hetfx {

// Base of every error raised by the library. The subclasses map onto the
// CLI exit codes (config 1, data 2, estimation 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public EstimationError {
 public:
  ConvergenceError(const std::string& what, long sweeps)
      : EstimationError(what), sweeps_(sweeps) {}
  long sweeps() const { return sweeps_; }

 private:
  long sweeps_;
};

}  // namespace hetfx
