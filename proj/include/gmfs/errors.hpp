#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmfs {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Request exceeds what an exact algorithm supports (size caps, dimension).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: inversion, negative variance, etc.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A particle coordinate became non-finite during integration.
class IntegrationBlowup : public std::runtime_error {
 public:
  IntegrationBlowup(std::size_t particle, double time)
      : std::runtime_error("integration blow-up at particle " + std::to_string(particle) +
                           ", t=" + std::to_string(time)),
        particle_(particle),
        time_(time) {}

  std::size_t particle() const { return particle_; }
  double time() const { return time_; }

 private:
  std::size_t particle_;
  double time_;
};

}  // namespace gmfs
