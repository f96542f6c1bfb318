#include "vwseg/error.hpp"

namespace vwseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::InvalidContour: return "InvalidContour";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateContour: return "DegenerateContour";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ContainmentViolation: return "ContainmentViolation";
    case ErrorCode::NoAnnotations: return "NoAnnotations";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BoxOutOfBounds: return "BoxOutOfBounds";
    case ErrorCode::PointOutOfPatch: return "PointOutOfPatch";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::GraphError: return "GraphError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::NoPrior: return "NoPrior";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::EmptyContour: return "EmptyContour";
    case ErrorCode::MismatchError: return "MismatchError";
    case ErrorCode::NonFinite: return "NonFinite";
  }
  return "Unknown";
}

}  // namespace vwseg
