#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vt {

// Error kinds are grouped by the CLI exit code they map to.
enum class ErrorKind {
  // usage (exit 2)
  InvalidArgument,
  // data / schema (exit 3)
  MalformedHeader,
  UnsupportedCodec,
  EmptyData,
  MissingColumn,
  UnknownEnum,
  BadValue,
  DuplicateId,
  InconsistentSpeaker,
  SignalTooShort,
  TooFewCycles,
  Unvoiced,
  ShapeMismatch,
  DimensionMismatch,
  SingleClass,
  MissingClass,
  InsufficientData,
  NotFitted,
  IoError,
  VersionMismatch,
  ChecksumMismatch,
  TruncatedFile,
  // numeric (exit 4)
  NonFinite,
  Diverged,
  UndefinedMetric,
};

std::string_view error_kind_name(ErrorKind kind);
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace vt
