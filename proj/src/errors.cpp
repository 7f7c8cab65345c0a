#include "bml/errors.hpp"

namespace bml {

const char* error_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingDegree: return "MissingDegree";
    case ErrorKind::EmptyCandidates: return "EmptyCandidates";
    case ErrorKind::UnsupportedBundle: return "UnsupportedBundle";
    case ErrorKind::BoundTooSmall: return "BoundTooSmall";
    case ErrorKind::InvalidResolution: return "InvalidResolution";
    case ErrorKind::NonFiniteIntegrand: return "NonFiniteIntegrand";
    case ErrorKind::LevelBelowRegularity: return "LevelBelowRegularity";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DegenerateMetric: return "DegenerateMetric";
    case ErrorKind::DegenerateSamples: return "DegenerateSamples";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::Inconclusive: return "Inconclusive";
    case ErrorKind::MissingHE: return "MissingHE";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ExperimentFailed: return "ExperimentFailed";
    case ErrorKind::IOError: return "IOError";
  }
  return "Error";
}

}  // namespace bml
