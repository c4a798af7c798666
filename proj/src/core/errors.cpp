#include "core/errors.hpp"

namespace siamlab {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::SelfNegative: return "SelfNegative";
    case ErrorCode::TemperatureNonPositive: return "TemperatureNonPositive";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StaleTape: return "StaleTape";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::InvalidArchitecture: return "InvalidArchitecture";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::UntrainedPredictor: return "UntrainedPredictor";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::InvalidOverride: return "InvalidOverride";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace siamlab
