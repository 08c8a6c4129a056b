#include "error.hpp"

namespace ocutrack {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::CropImpossible: return "CropImpossible";
    case ErrorCode::InfeasibleInput: return "InfeasibleInput";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NoCenter: return "NoCenter";
    case ErrorCode::TooFewEdges: return "TooFewEdges";
    case ErrorCode::FeatureOutOfFrame: return "FeatureOutOfFrame";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
  }
  return "Unknown";
}

}  // namespace ocutrack
