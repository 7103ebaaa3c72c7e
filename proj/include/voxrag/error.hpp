#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxrag {

enum class Errc {
  NotFound,
  UnsupportedCodec,
  CorruptHeader,
  ParseError,
  InvariantViolation,
  NegativeDuration,
  OutOfRange,
  BackendUnavailable,
  DimensionMismatch,
  NonFiniteValue,
  ZeroVector,
  DuplicateId,
  NotNormalized,
  UnknownSegmentId,
  MissingTranscript,
  EmptyCompletion,
  UnparseableReply,
  OutOfRangeScore,
  UndefinedMetric,
  DegenerateVariance,
  LengthMismatch,
  ScriptMiss,
  PortInUse,
  CorruptStore,
  PartialIngest,
  ConfigError,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NotFound: return "NotFound";
    case Errc::UnsupportedCodec: return "UnsupportedCodec";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::ParseError: return "ParseError";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::NegativeDuration: return "NegativeDuration";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::UnknownSegmentId: return "UnknownSegmentId";
    case Errc::MissingTranscript: return "MissingTranscript";
    case Errc::EmptyCompletion: return "EmptyCompletion";
    case Errc::UnparseableReply: return "UnparseableReply";
    case Errc::OutOfRangeScore: return "OutOfRangeScore";
    case Errc::UndefinedMetric: return "UndefinedMetric";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ScriptMiss: return "ScriptMiss";
    case Errc::PortInUse: return "PortInUse";
    case Errc::CorruptStore: return "CorruptStore";
    case Errc::PartialIngest: return "PartialIngest";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Every failure the engine reports carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace voxrag
