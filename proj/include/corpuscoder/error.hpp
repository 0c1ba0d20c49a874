#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace corpuscoder {

enum class ErrorKind {
  // corpus
  MissingColumn,
  MissingTextFile,
  DuplicateId,
  EmptyText,
  ReservedColumn,
  InvalidUtf8,
  MalformedCsv,
  SampleTooLarge,
  MalformedValue,
  UnknownDocument,
  // chunker
  InvalidWindow,
  WordTooLarge,
  EmptyAnswers,
  // gateway
  AuthFailed,
  RateLimited,
  Timeout,
  ServerError,
  ContextLengthExceeded,
  BudgetExceeded,
  MalformedResponse,
  UnknownModel,
  InvalidRequest,
  // prompt
  ParseFailure,
  RangeViolation,
  LabelViolation,
  InvalidSpec,
  // runner
  JournalCorrupt,
  SpecMismatch,
  // reliability
  NoPairableUnits,
  DegenerateData,
  NoOverlap,
  InvalidData,
  // general
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every library failure. `kind()` is the stable,
/// machine-checkable classification; `what()` is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace corpuscoder
