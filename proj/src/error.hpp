#pragma once

#include <stdexcept>
#include <string>

namespace ocutrack {

enum class ErrorCode {
  InvalidArgument,
  Io,
  MalformedHeader,
  TruncatedData,
  ImageTooSmall,
  DimensionMismatch,
  ShapeMismatch,
  OddDimension,
  CropImpossible,
  InfeasibleInput,
  SizeMismatch,
  EmptyDataset,
  BadMagic,
  VersionUnsupported,
  ManifestMismatch,
  TruncatedPayload,
  DegenerateInput,
  NoCenter,
  TooFewEdges,
  FeatureOutOfFrame,
  InsufficientData,
  DegenerateGeometry,
};

const char* error_code_name(ErrorCode code);

// Every failure raised by the core carries one of the codes above; the C API
// maps them onto status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ocutrack
