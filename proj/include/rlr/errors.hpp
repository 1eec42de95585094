#pragma once

#include <stdexcept>
#include <string>

namespace rlr {

/// A precondition on dimensions, layouts or argument ranges was violated.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A latent became non-finite or exceeded the divergence threshold.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& what)
      : std::runtime_error(what), step_(step) {}

  /// Chain step (1..T) whose output diverged; 0 when raised outside the chain.
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// The finite-difference oracle hit a non-finite function value.
class OracleFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Monte Carlo meter could not produce trustworthy statistics.
class MeterFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment or sampler configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rlr
