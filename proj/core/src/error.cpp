#include "edgeinfer/error.hpp"

namespace edgeinfer {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedCast: return "unsupported-cast";
    case ErrorCode::kInvalidQuantParams: return "invalid-quant-params";
    case ErrorCode::kInvalidTensor: return "invalid-tensor";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::kUnknownOp: return "unknown-op";
    case ErrorCode::kDanglingReference: return "dangling-reference";
    case ErrorCode::kArityViolation: return "arity-violation";
    case ErrorCode::kCycle: return "cycle";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kDtypeMismatch: return "dtype-mismatch";
    case ErrorCode::kUnsupportedVersion: return "unsupported-version";
    case ErrorCode::kMalformedBundle: return "malformed-bundle";
    case ErrorCode::kUndecodableImage: return "undecodable-image";
    case ErrorCode::kUnsupportedFormat: return "unsupported-format";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kEmptyClassDirectory: return "empty-class-directory";
    case ErrorCode::kClassTooSmall: return "class-too-small";
    case ErrorCode::kMissingCalibration: return "missing-calibration";
    case ErrorCode::kMissingFeatureNode: return "missing-feature-node";
    case ErrorCode::kFeatureNodeConsumed: return "feature-node-consumed";
    case ErrorCode::kWidthMismatch: return "width-mismatch";
    case ErrorCode::kDegenerateData: return "degenerate-data";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kLabelOutOfRange: return "label-out-of-range";
    case ErrorCode::kEmptyMatrix: return "empty-matrix";
    case ErrorCode::kMissingOriginal: return "missing-original";
    case ErrorCode::kEmptyWindow: return "empty-window";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace edgeinfer
