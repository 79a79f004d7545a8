#pragma once

#include <stdexcept>
#include <string>

namespace flowanom {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  DistanceConflict,
  UnknownService,
  StopNotOnRoute,
  WrongDirection,
  DistanceMismatch,
  EmptyInput,
  MissingSegmentSpeed,
  NonPositiveVariance,
  ZeroVariance,
  SegmentNotOnPath,
  TooFewRecords,
  AllRowsRejected,
  Disconnected,
  Inconsistent,
  DuplicatePosition,
};

const char* error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above; the C
// layer maps them onto status values one to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flowanom
