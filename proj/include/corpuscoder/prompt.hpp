#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "corpuscoder/chat.hpp"
#include "corpuscoder/error.hpp"

namespace corpuscoder::prompt {

struct NumericRange {
  double min = 0.0;
  double max = 2.0;
  friend bool operator==(const NumericRange&, const NumericRange&) = default;
};

struct Categorical {
  std::vector<std::string> labels;
  friend bool operator==(const Categorical&, const Categorical&) = default;
};

struct FreeText {
  friend bool operator==(const FreeText&, const FreeText&) = default;
};

using AnswerSchema = std::variant<NumericRange, Categorical, FreeText>;

struct ModelParams {
  std::string model = "gpt-4";
  double temperature = 0.2;
  std::optional<int> max_tokens;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// The codebook instruction plus everything needed to call the model and
/// read its answer. Immutable; the version hash is computed on construction.
class PromptSpec {
 public:
  /// Throws Error{InvalidSpec} on an empty instruction or separator,
  /// min >= max, or empty/repeated labels.
  PromptSpec(std::string instruction, AnswerSchema schema, std::string separator = ";",
             ModelParams model_params = {});

  [[nodiscard]] const std::string& instruction() const noexcept { return instruction_; }
  [[nodiscard]] const AnswerSchema& schema() const noexcept { return schema_; }
  [[nodiscard]] const std::string& separator() const noexcept { return separator_; }
  [[nodiscard]] const ModelParams& model_params() const noexcept { return model_params_; }
  /// SHA-256 over a canonical encoding of instruction, schema, separator and
  /// model params; equal specs hash equal, any field change changes it.
  [[nodiscard]] const std::string& version_hash() const noexcept { return version_hash_; }

 private:
  std::string instruction_;
  AnswerSchema schema_;
  std::string separator_;
  ModelParams model_params_;
  std::string version_hash_;
};

/// Reads a YAML prompt file:
///
///   instruction: |
///     Your task is ...
///   schema:
///     type: numeric_range      # numeric_range | categorical | free_text
///     min: 0
///     max: 2
///     # labels: [yes, no]      # categorical only
///   separator: ";"
///   model:
///     name: gpt-4
///     temperature: 0.2
///     max_tokens: 50           # optional
PromptSpec load_prompt_spec(const std::filesystem::path& path);
PromptSpec parse_prompt_spec(std::string_view yaml_text);
std::string to_yaml(const PromptSpec& spec);

/// Numeric answers are doubles; categorical labels and free text are strings.
using Answer = std::variant<double, std::string>;

struct ParsedAnswer {
  Answer answer;
  std::string motivation;
  friend bool operator==(const ParsedAnswer&, const ParsedAnswer&) = default;
};

struct ParseError {
  ErrorKind kind = ErrorKind::ParseFailure;  // ParseFailure | RangeViolation | LabelViolation
  std::string raw;
  std::string detail;
};

/// Outcome of parse_response: an answer or a typed error that keeps the raw text.
class ParseResult {
 public:
  ParseResult(ParsedAnswer answer) : value_(std::move(answer)) {}  // NOLINT
  ParseResult(ParseError error) : value_(std::move(error)) {}      // NOLINT

  [[nodiscard]] bool ok() const noexcept { return std::holds_alternative<ParsedAnswer>(value_); }
  [[nodiscard]] const ParsedAnswer& value() const { return std::get<ParsedAnswer>(value_); }
  [[nodiscard]] const ParseError& error() const { return std::get<ParseError>(value_); }

 private:
  std::variant<ParsedAnswer, ParseError> value_;
};

/// [system: instruction, user: 'text'].
std::vector<Message> render_messages(const PromptSpec& spec, std::string_view text);

/// Trim, drop one pair of surrounding double quotes, split on the first
/// separator, parse the head per schema; the tail (left-trimmed) is the
/// motivation. No separator: the whole string must parse as an answer.
/// Never throws.
ParseResult parse_response(std::string_view raw, const PromptSpec& spec) noexcept;

/// "answer{separator} motivation", the shape the instruction asks for.
std::string format_answer(const Answer& answer, std::string_view motivation,
                          std::string_view separator);

std::string answer_to_string(const Answer& answer);

/// Numeric value of an answer for agreement statistics. Numbers pass
/// through; labels that look like decimals convert directly; other labels
/// map to their index in `schema` when categorical. Nullopt otherwise.
std::optional<double> answer_as_number(const Answer& answer, const AnswerSchema* schema = nullptr);

struct LintFinding {
  std::string code;
  std::string message;
};

/// Non-blocking checks: no bracketed output-format clause, separator inside
/// a categorical label, instruction larger than the token reserve.
std::vector<LintFinding> validate_spec(const PromptSpec& spec,
                                       std::optional<std::size_t> reserve_tokens = std::nullopt);

}  // namespace corpuscoder::prompt
