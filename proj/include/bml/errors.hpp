#pragma once

#include <stdexcept>
#include <string>

namespace bml {

enum class ErrorKind {
  MissingDegree,
  EmptyCandidates,
  UnsupportedBundle,
  BoundTooSmall,
  InvalidResolution,
  NonFiniteIntegrand,
  LevelBelowRegularity,
  RankDeficient,
  DegenerateMetric,
  DegenerateSamples,
  StepTooLarge,
  InsufficientSamples,
  SingularGram,
  Inconclusive,
  MissingHE,
  InvalidInput,
  ConfigError,
  ExperimentFailed,
  IOError,
};

const char* error_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bml
