#pragma once

#include <stdexcept>
#include <string>

namespace siamlab {

enum class ErrorCode {
  ZeroNormRow,
  ZeroNormVector,
  ShapeMismatch,
  NonFiniteEvaluation,
  BatchTooSmall,
  SelfNegative,
  TemperatureNonPositive,
  DimensionMismatch,
  StaleTape,
  BadDims,
  IndexOutOfRange,
  TooFewViews,
  BadSpec,
  BatchTooLarge,
  MalformedFile,
  TruncatedRecord,
  InvalidArchitecture,
  DivergedTraining,
  UntrainedPredictor,
  UnknownPreset,
  InvalidOverride,
  InvalidParameter,
  MissingColumn,
  Io,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// C layer can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace siamlab
