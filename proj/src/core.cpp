#include "mfl/core.hpp"

namespace mfl {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::OffManifold: return "OffManifold";
    case ErrorCode::CutLocusAmbiguity: return "CutLocusAmbiguity";
    case ErrorCode::FrameNotOrthonormal: return "FrameNotOrthonormal";
    case ErrorCode::StencilOutOfDomain: return "StencilOutOfDomain";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::DegenerateInterval: return "DegenerateInterval";
    case ErrorCode::RadiusTooLarge: return "RadiusTooLarge";
    case ErrorCode::NestedBudgetExceeded: return "NestedBudgetExceeded";
    case ErrorCode::SignalBelowNoise: return "SignalBelowNoise";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NonPositiveField: return "NonPositiveField";
    case ErrorCode::FieldBelowOne: return "FieldBelowOne";
    case ErrorCode::NoSolution: return "NoSolution";
    case ErrorCode::NoMinimizer: return "NoMinimizer";
    case ErrorCode::UnsupportedDrift: return "UnsupportedDrift";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace mfl
