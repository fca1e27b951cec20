#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace edgeinfer {

/// Stable error classes. The string form (see `to_string`) is what the CLI
/// prints and what the HTTP service puts in its `code` field.
enum class ErrorCode {
  kUnsupportedCast,
  kInvalidQuantParams,
  kInvalidTensor,
  kInvalidArgument,
  kChecksumMismatch,
  kUnknownOp,
  kDanglingReference,
  kArityViolation,
  kCycle,
  kShapeMismatch,
  kDtypeMismatch,
  kUnsupportedVersion,
  kMalformedBundle,
  kUndecodableImage,
  kUnsupportedFormat,
  kEmptyDataset,
  kEmptyClassDirectory,
  kClassTooSmall,
  kMissingCalibration,
  kMissingFeatureNode,
  kFeatureNodeConsumed,
  kWidthMismatch,
  kDegenerateData,
  kLengthMismatch,
  kLabelOutOfRange,
  kEmptyMatrix,
  kMissingOriginal,
  kEmptyWindow,
  kParseError,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// The single exception type thrown by the library. `subject()` names the
/// offending entity (node id, file path, line number) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string subject = {})
      : std::runtime_error(std::move(message)), code_(code), subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

}  // namespace edgeinfer
