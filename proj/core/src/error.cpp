#include "marginforge/error.hpp"

namespace marginforge {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kLambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonSquare: return "NonSquare";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kChecksumError: return "ChecksumError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kTypeError: return "TypeError";
    case ErrorCode::kMissingRequired: return "MissingRequired";
    case ErrorCode::kNumericError: return "NumericError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      detail_(message) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace marginforge
