// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace oce {

/// Argument outside the mathematical domain of an operation (e.g. negative displacement).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Shape or precondition mismatch between caller and callee.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Indentation parameters that cannot produce a usable recording.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The moving interface or the sample strain left the renderable range.
class SimulationOverrun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Statistic undefined because every observation is tied.
class DegenerateTiesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during optimization.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Persisted artifact is malformed or was produced by a different configuration.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage aborted; what() starts with the stage name.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace oce
