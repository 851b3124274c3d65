#pragma once

#include <stdexcept>
#include <string>

namespace dfmpc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between matrices, sequences or configuration.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// (I - A1) is singular, so the steady state of the known subsystem is not unique.
class EquilibriumUndefined : public Error {
 public:
  using Error::Error;
};

// A pseudo-inverse was requested for a rank-deficient operator.
class IllPosedError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Raised by the receding-horizon loop when the policy is to stop on infeasibility.
class ControllerAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace dfmpc
