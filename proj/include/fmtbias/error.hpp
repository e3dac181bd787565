#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fmtbias {

enum class Errc {
  // formats
  UnbalancedDelimiters,
  RowArityMismatch,
  MalformedTriple,
  MissingInfoboxHeader,
  MalformedField,
  UnexpectedContent,
  InvariantViolation,
  NotCountable,
  // corruption
  NotApplicable,
  // corpus
  Io,
  Schema,
  // gateway
  Config,
  TerminalBackend,
  Auth,
  // conversion
  ConversionInvalid,
  EntryCountMismatch,
  MissingPlaceholder,
  // adjudication
  UnparseableJudgeOutput,
  MissingPayload,
  // stats
  EmptyCell,
  InvalidArgument,
  Degenerate,
  UnknownGroupKey,
  // attention
  IndexOutOfRange,
  EmptyTrace,
  // reporting
  UnknownFormat,
};

inline constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::UnbalancedDelimiters: return "UnbalancedDelimiters";
    case Errc::RowArityMismatch: return "RowArityMismatch";
    case Errc::MalformedTriple: return "MalformedTriple";
    case Errc::MissingInfoboxHeader: return "MissingInfoboxHeader";
    case Errc::MalformedField: return "MalformedField";
    case Errc::UnexpectedContent: return "UnexpectedContent";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::NotCountable: return "NotCountable";
    case Errc::NotApplicable: return "NotApplicable";
    case Errc::Io: return "Io";
    case Errc::Schema: return "Schema";
    case Errc::Config: return "Config";
    case Errc::TerminalBackend: return "TerminalBackendError";
    case Errc::Auth: return "AuthError";
    case Errc::ConversionInvalid: return "ConversionInvalid";
    case Errc::EntryCountMismatch: return "EntryCountMismatch";
    case Errc::MissingPlaceholder: return "MissingPlaceholder";
    case Errc::UnparseableJudgeOutput: return "UnparseableJudgeOutput";
    case Errc::MissingPayload: return "MissingPayload";
    case Errc::EmptyCell: return "EmptyCell";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Degenerate: return "Degenerate";
    case Errc::UnknownGroupKey: return "UnknownGroupKey";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::EmptyTrace: return "EmptyTrace";
    case Errc::UnknownFormat: return "UnknownFormat";
  }
  return "Unknown";
}

// Single exception type for the library. `position` is a byte offset for
// format errors and a 1-based line number for JSONL schema errors; npos
// when it carries no location.
class Error : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Error(Errc code, const std::string& what, std::size_t position = npos)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        position_(position) {}

  Errc code() const noexcept { return code_; }
  std::size_t position() const noexcept { return position_; }

 private:
  Errc code_;
  std::size_t position_;
};

}  // namespace fmtbias
