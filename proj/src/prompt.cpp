#include "corpuscoder/prompt.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "corpuscoder/chunker.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::prompt {

namespace {

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorKind::InvalidSpec, why); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string compute_version_hash(const std::string& instruction, const AnswerSchema& schema,
                                 const std::string& separator, const ModelParams& params) {
  Sha256 h;
  h.update_field("prompt-spec/1");
  h.update_field(instruction);
  std::visit(overloaded{[&](const NumericRange& r) {
                          h.update_field("numeric_range");
                          h.update_field(format_decimal(r.min));
                          h.update_field(format_decimal(r.max));
                        },
                        [&](const Categorical& c) {
                          h.update_field("categorical");
                          h.update_field(std::to_string(c.labels.size()));
                          for (const auto& l : c.labels) h.update_field(l);
                        },
                        [&](const FreeText&) { h.update_field("free_text"); }},
             schema);
  h.update_field(separator);
  h.update_field(params.model);
  h.update_field(format_decimal(params.temperature));
  h.update_field(params.max_tokens ? std::to_string(*params.max_tokens) : "-");
  return h.hex_digest();
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool has_format_clause(std::string_view instruction) {
  static constexpr std::string_view kKeywords[] = {"answer", "respond", "reply", "output", "format"};
  std::size_t pos = 0;
  while ((pos = instruction.find('[', pos)) != std::string_view::npos) {
    const std::size_t close = instruction.find(']', pos + 1);
    const auto body = lowercase(instruction.substr(
        pos + 1, close == std::string_view::npos ? std::string_view::npos : close - pos - 1));
    for (auto kw : kKeywords) {
      if (body.find(kw) != std::string::npos) return true;
    }
    if (close == std::string_view::npos) break;
    pos = close + 1;
  }
  return false;
}

// Strips one matching pair of ASCII or typographic double quotes.
std::string_view strip_quotes(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  constexpr std::string_view kOpen = "\xE2\x80\x9C";   // U+201C
  constexpr std::string_view kClose = "\xE2\x80\x9D";  // U+201D
  if (s.size() >= 6 && s.substr(0, 3) == kOpen && s.substr(s.size() - 3) == kClose) {
    return s.substr(3, s.size() - 6);
  }
  return s;
}

}  // namespace

PromptSpec::PromptSpec(std::string instruction, AnswerSchema schema, std::string separator,
                       ModelParams model_params)
    : instruction_(std::move(instruction)),
      schema_(std::move(schema)),
      separator_(std::move(separator)),
      model_params_(std::move(model_params)) {
  if (trim(instruction_).empty()) invalid("instruction is empty");
  if (separator_.empty()) invalid("separator is empty");
  if (const auto* r = std::get_if<NumericRange>(&schema_)) {
    if (!(r->min < r->max)) invalid("numeric range needs min < max");
  }
  if (const auto* c = std::get_if<Categorical>(&schema_)) {
    if (c->labels.empty()) invalid("categorical schema has no labels");
    std::set<std::string> seen;
    for (const auto& l : c->labels) {
      if (trim(l).empty()) invalid("empty categorical label");
      if (!seen.insert(l).second) invalid("repeated categorical label '" + l + "'");
    }
  }
  if (model_params_.model.empty()) invalid("model name is empty");
  if (!(model_params_.temperature >= 0.0 && model_params_.temperature <= 2.0)) {
    invalid("temperature must be in [0, 2]");
  }
  if (model_params_.max_tokens && *model_params_.max_tokens <= 0) invalid("max_tokens must be positive");
  version_hash_ = compute_version_hash(instruction_, schema_, separator_, model_params_);
}

PromptSpec parse_prompt_spec(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    invalid(std::string("prompt file is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) invalid("prompt file must be a mapping");
  try {
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (key != "instruction" && key != "schema" && key != "separator" && key != "model") {
        invalid("unknown prompt field '" + key + "'");
      }
    }
    if (!root["instruction"]) invalid("missing 'instruction'");
    auto instruction = root["instruction"].as<std::string>();

    AnswerSchema schema = NumericRange{};
    if (const auto s = root["schema"]) {
      const auto type = s["type"] ? s["type"].as<std::string>() : std::string("numeric_range");
      if (type == "numeric_range") {
        if (!s["min"] || !s["max"]) invalid("numeric_range needs min and max");
        schema = NumericRange{s["min"].as<double>(), s["max"].as<double>()};
      } else if (type == "categorical") {
        if (!s["labels"] || !s["labels"].IsSequence()) invalid("categorical needs a labels list");
        schema = Categorical{s["labels"].as<std::vector<std::string>>()};
      } else if (type == "free_text") {
        schema = FreeText{};
      } else {
        invalid("unknown schema type '" + type + "'");
      }
    }
    std::string separator = root["separator"] ? root["separator"].as<std::string>() : ";";
    ModelParams params;
    if (const auto m = root["model"]) {
      if (m["name"]) params.model = m["name"].as<std::string>();
      if (m["temperature"]) params.temperature = m["temperature"].as<double>();
      if (m["max_tokens"] && !m["max_tokens"].IsNull()) params.max_tokens = m["max_tokens"].as<int>();
    }
    return PromptSpec(std::move(instruction), std::move(schema), std::move(separator), std::move(params));
  } catch (const YAML::Exception& e) {
    invalid(std::string("bad prompt field: ") + e.what());
  }
}

PromptSpec load_prompt_spec(const std::filesystem::path& path) {
  return parse_prompt_spec(read_file(path));
}

std::string to_yaml(const PromptSpec& spec) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "instruction" << YAML::Value << YAML::Literal << spec.instruction();
  out << YAML::Key << "schema" << YAML::Value << YAML::BeginMap;
  std::visit(overloaded{[&](const NumericRange& r) {
                          out << YAML::Key << "type" << YAML::Value << "numeric_range";
                          out << YAML::Key << "min" << YAML::Value << format_decimal(r.min);
                          out << YAML::Key << "max" << YAML::Value << format_decimal(r.max);
                        },
                        [&](const Categorical& c) {
                          out << YAML::Key << "type" << YAML::Value << "categorical";
                          out << YAML::Key << "labels" << YAML::Value << YAML::Flow << c.labels;
                        },
                        [&](const FreeText&) { out << YAML::Key << "type" << YAML::Value << "free_text"; }},
             spec.schema());
  out << YAML::EndMap;
  out << YAML::Key << "separator" << YAML::Value << YAML::DoubleQuoted << spec.separator();
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << spec.model_params().model;
  out << YAML::Key << "temperature" << YAML::Value << format_decimal(spec.model_params().temperature);
  if (spec.model_params().max_tokens) {
    out << YAML::Key << "max_tokens" << YAML::Value << *spec.model_params().max_tokens;
  }
  out << YAML::EndMap << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::vector<Message> render_messages(const PromptSpec& spec, std::string_view text) {
  return {Message{Role::System, spec.instruction()},
          Message{Role::User, "'" + std::string(text) + "'"}};
}

ParseResult parse_response(std::string_view raw, const PromptSpec& spec) noexcept {
  try {
    const std::string_view body = trim(strip_quotes(trim(raw)));
    std::string_view head = body;
    std::string_view motivation;
    if (const auto pos = body.find(spec.separator()); pos != std::string_view::npos) {
      head = trim(body.substr(0, pos));
      motivation = trim_left(body.substr(pos + spec.separator().size()));
    }
    auto fail = [&](ErrorKind kind, std::string detail) -> ParseResult {
      return ParseError{kind, std::string(raw), std::move(detail)};
    };

    return std::visit(
        overloaded{
            [&](const NumericRange& r) -> ParseResult {
              const auto value = parse_decimal(head);
              if (!value) return fail(ErrorKind::ParseFailure, "'" + std::string(head) + "' is not a number");
              if (*value < r.min || *value > r.max) {
                return fail(ErrorKind::RangeViolation, format_decimal(*value) + " is outside [" +
                                                           format_decimal(r.min) + ", " +
                                                           format_decimal(r.max) + "]");
              }
              return ParsedAnswer{*value, std::string(motivation)};
            },
            [&](const Categorical& c) -> ParseResult {
              if (head.empty()) return fail(ErrorKind::ParseFailure, "empty answer");
              if (std::find(c.labels.begin(), c.labels.end(), head) == c.labels.end()) {
                return fail(ErrorKind::LabelViolation, "'" + std::string(head) + "' is not a known label");
              }
              return ParsedAnswer{std::string(head), std::string(motivation)};
            },
            [&](const FreeText&) -> ParseResult {
              if (head.empty()) return fail(ErrorKind::ParseFailure, "empty answer");
              return ParsedAnswer{std::string(head), std::string(motivation)};
            }},
        spec.schema());
  } catch (...) {
    return ParseError{ErrorKind::ParseFailure, std::string(raw), "internal parse error"};
  }
}

std::string answer_to_string(const Answer& answer) {
  if (const auto* d = std::get_if<double>(&answer)) return format_decimal(*d);
  return std::get<std::string>(answer);
}

std::string format_answer(const Answer& answer, std::string_view motivation,
                          std::string_view separator) {
  return answer_to_string(answer) + std::string(separator) + " " + std::string(motivation);
}

std::optional<double> answer_as_number(const Answer& answer, const AnswerSchema* schema) {
  if (const auto* d = std::get_if<double>(&answer)) return *d;
  const auto& label = std::get<std::string>(answer);
  if (auto v = parse_decimal(trim(label))) return v;
  if (schema) {
    if (const auto* c = std::get_if<Categorical>(schema)) {
      auto it = std::find(c->labels.begin(), c->labels.end(), label);
      if (it != c->labels.end()) return static_cast<double>(it - c->labels.begin());
    }
  }
  return std::nullopt;
}

std::vector<LintFinding> validate_spec(const PromptSpec& spec, std::optional<std::size_t> reserve_tokens) {
  std::vector<LintFinding> findings;
  if (!has_format_clause(spec.instruction())) {
    findings.push_back({"no-format-clause",
                        "no output-format clause: add a bracketed instruction such as "
                        "[Answer with ... followed by '" +
                            spec.separator() + "' and a brief motivation]"});
  }
  if (const auto* c = std::get_if<Categorical>(&spec.schema())) {
    for (const auto& label : c->labels) {
      if (label.find(spec.separator()) != std::string::npos) {
        findings.push_back({"separator-in-label",
                            "separator inside label '" + label + "': answers using it cannot be parsed"});
      }
    }
  }
  if (reserve_tokens) {
    const auto tokens = chunker::estimate_tokens(spec.instruction());
    if (tokens > *reserve_tokens) {
      findings.push_back({"instruction-exceeds-reserve",
                          "instruction needs ~" + std::to_string(tokens) +
                              " tokens but only " + std::to_string(*reserve_tokens) +
                              " are reserved for instruction and response"});
    }
  }
  return findings;
}

}  // namespace corpuscoder::prompt
