#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace biasprobe {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  InvalidTemplate,
  InsufficientAttributes,
  ShapeMismatch,
  InvalidTensor,
  InvalidThreshold,
  InvalidMargin,
  InvalidProbability,
  CategoryMismatch,
  DegeneratePerturbation,
  IndexError,
  Unsupported,
  SequenceTooLong,
  NotFound,
  FormatError,
  EmptyResults,
  InconsistentInputs,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidTemplate: return "InvalidTemplate";
    case ErrorKind::InsufficientAttributes: return "InsufficientAttributes";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidTensor: return "InvalidTensor";
    case ErrorKind::InvalidThreshold: return "InvalidThreshold";
    case ErrorKind::InvalidMargin: return "InvalidMargin";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::CategoryMismatch: return "CategoryMismatch";
    case ErrorKind::DegeneratePerturbation: return "DegeneratePerturbation";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::EmptyResults: return "EmptyResults";
    case ErrorKind::InconsistentInputs: return "InconsistentInputs";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto a failure class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// Re-raise `e` with extra context prepended, keeping its kind.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.kind(), context + ": " + e.message());
}

}  // namespace biasprobe
