#include "voxelseg/error.hpp"

namespace voxelseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::DimensionalityError: return "DimensionalityError";
    case ErrorCode::MissingSidecar: return "MissingSidecar";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidVolume: return "InvalidVolume";
    case ErrorCode::WrongIntensityKind: return "WrongIntensityKind";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::IndivisibleShape: return "IndivisibleShape";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
  }
  return "Unknown";
}

}  // namespace voxelseg
