#include "voicetriage/error.hpp"

namespace vt {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::UnsupportedCodec: return "UnsupportedCodec";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::UnknownEnum: return "UnknownEnum";
    case ErrorKind::BadValue: return "BadValue";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InconsistentSpeaker: return "InconsistentSpeaker";
    case ErrorKind::SignalTooShort: return "SignalTooShort";
    case ErrorKind::TooFewCycles: return "TooFewCycles";
    case ErrorKind::Unvoiced: return "Unvoiced";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::MissingClass: return "MissingClass";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NotFitted: return "NotFitted";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return 2;
    case ErrorKind::NonFinite:
    case ErrorKind::Diverged:
    case ErrorKind::UndefinedMetric:
      return 4;
    default:
      return 3;
  }
}

}  // namespace vt
