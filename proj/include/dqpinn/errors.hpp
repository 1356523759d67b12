#pragma once

#include <stdexcept>
#include <string>

namespace dqpinn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated physics invariant or numerical breakdown.
class PhysicsError : public Error {
 public:
  using Error::Error;
};

class DecompositionError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class SingularArgumentError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class DegeneracyError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class OracleError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class CapacityError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class ConventionError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class ClosureError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class InstabilityError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class StepError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class DivisionGuardError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Optimizer or training schedule failed to reach its target.
class OptimizationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dqpinn
