#pragma once

#include <stdexcept>
#include <string>

namespace irrig {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument; CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Richards solver failed to converge even at the minimum time step.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, int day = -1)
      : Error(day >= 0 ? what + " (day " + std::to_string(day) + ")" : what), day_(day) {}
  int day() const { return day_; }

 private:
  int day_;
};

class DepthNotOnGrid : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InsufficientData : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ShapeMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Training loss became non-finite.
class Diverged : public Error {
 public:
  using Error::Error;
};

class HorizonTooLong : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IndivisibleHorizon : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ForecastExhausted : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace irrig
