#include "samspline/error.hpp"

namespace samspline {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::YearOutOfRange: return "YearOutOfRange";
    case ErrorCode::DegenerateKnots: return "DegenerateKnots";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::AllZeroMatrix: return "AllZeroMatrix";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonContiguousGroups: return "NonContiguousGroups";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonFiniteDensity: return "NonFiniteDensity";
    case ErrorCode::InnerDivergence: return "InnerDivergence";
    case ErrorCode::IndefiniteHessian: return "IndefiniteHessian";
    case ErrorCode::DataTooSmall: return "DataTooSmall";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::TooFewYears: return "TooFewYears";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::BaselineMissing: return "BaselineMissing";
    case ErrorCode::StockMismatch: return "StockMismatch";
  }
  return "Unknown";
}

}  // namespace samspline
