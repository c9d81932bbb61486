#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace girsanov {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument or configuration value violates a documented precondition.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// The time stepper produced a non-finite state; carries the offending step index.
class SimulationDivergedError : public Error {
 public:
  explicit SimulationDivergedError(std::size_t step)
      : Error("simulation diverged: non-finite state at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Every sampled trajectory was censored at t_max; the requested estimate is meaningless.
class DegenerateEstimateError : public Error {
 public:
  using Error::Error;
};

/// A reweighting factor or transformed sample left the representable range
/// (e.g. the exponential reweighting exponent would overflow a double).
class EstimatorUnusableError : public Error {
 public:
  using Error::Error;
};

/// A control-variate regression was requested against a (numerically) constant variate.
class DegenerateControlError : public Error {
 public:
  using Error::Error;
};

/// The Newton system could not be solved even after ridge regularization.
class IndefiniteHessianError : public Error {
 public:
  using Error::Error;
};

/// A config file or command line could not be parsed into a valid run description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace girsanov
