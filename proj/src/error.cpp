#include "upmnet/error.hpp"

namespace upmnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::IndivisibleHeight: return "IndivisibleHeight";
    case ErrorCode::PartCountMismatch: return "PartCountMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnknownTracklet: return "UnknownTracklet";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::EmptyTracklet: return "EmptyTracklet";
    case ErrorCode::DatasetTooSmall: return "DatasetTooSmall";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::InsufficientCrossCameraIdentities: return "InsufficientCrossCameraIdentities";
    case ErrorCode::NormDegenerate: return "NormDegenerate";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingCache: return "MissingCache";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  return code < ErrorCode::MissingFile;
}

}  // namespace upmnet
