#include "corpuscoder/error.hpp"

namespace corpuscoder {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MissingTextFile: return "MissingTextFile";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::EmptyText: return "EmptyText";
    case ErrorKind::ReservedColumn: return "ReservedColumn";
    case ErrorKind::InvalidUtf8: return "InvalidUtf8";
    case ErrorKind::MalformedCsv: return "MalformedCsv";
    case ErrorKind::SampleTooLarge: return "SampleTooLarge";
    case ErrorKind::MalformedValue: return "MalformedValue";
    case ErrorKind::UnknownDocument: return "UnknownDocument";
    case ErrorKind::InvalidWindow: return "InvalidWindow";
    case ErrorKind::WordTooLarge: return "WordTooLarge";
    case ErrorKind::EmptyAnswers: return "EmptyAnswers";
    case ErrorKind::AuthFailed: return "AuthFailed";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::ServerError: return "ServerError";
    case ErrorKind::ContextLengthExceeded: return "ContextLengthExceeded";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::UnknownModel: return "UnknownModel";
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::ParseFailure: return "ParseFailure";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::LabelViolation: return "LabelViolation";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::JournalCorrupt: return "JournalCorrupt";
    case ErrorKind::SpecMismatch: return "SpecMismatch";
    case ErrorKind::NoPairableUnits: return "NoPairableUnits";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace corpuscoder
