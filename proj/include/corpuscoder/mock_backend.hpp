#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "corpuscoder/gateway.hpp"

namespace corpuscoder::gateway {

/// Deterministic replacement for a provider. Resolution order per call:
/// scheduled faults, keyed table (messages_key), substring rules on the last
/// user message, regex generator, in-code generator, default. A call that
/// nothing answers fails with MalformedResponse.
struct MockScript {
  struct Rule {
    std::string contains;
    std::string response;
  };
  /// Fails the listed global call numbers (1-based).
  struct CallFault {
    std::vector<int> calls;
    ErrorKind error = ErrorKind::Timeout;
  };
  /// Fails the first `times` calls whose messages_key (or user text
  /// substring) matches.
  struct KeyFault {
    std::string key;
    std::string contains;
    int times = 1;
    ErrorKind error = ErrorKind::Timeout;
  };
  struct RegexGenerator {
    std::string pattern;
    /// std::regex format string, e.g. "$1; planted".
    std::string format;
  };

  std::map<std::string, std::string> responses;
  std::vector<Rule> rules;
  std::optional<RegexGenerator> generator;
  std::function<std::optional<std::string>(const ChatRequest&)> generate;
  std::optional<std::string> default_response;
  std::vector<CallFault> call_faults;
  std::vector<KeyFault> key_faults;
  /// Report usage from the word heuristic (true) or omit it (false).
  bool report_usage = true;
  /// When set, every call appends "<call>\t<key>\n" here (flushed), so
  /// request counts survive a killed process.
  std::filesystem::path request_log;
};

/// JSON script file:
/// {
///   "responses": {"<messages key>": "1; text"},
///   "rules": [{"contains": "[doc=d07]", "response": "0; text"}],
///   "generator": {"pattern": "\\[code=([0-9.]+)\\]", "format": "$1; planted"},
///   "default": "0; nothing",
///   "faults": [{"calls": [1, 2], "error": "RateLimited"},
///              {"contains": "[doc=d03]", "times": 2, "error": "Timeout"}],
///   "usage": true,
///   "request_log": "calls.log"
/// }
/// Relative request_log paths resolve against the script's directory.
MockScript load_mock_script(const std::filesystem::path& path);
MockScript parse_mock_script(std::string_view json_text, const std::filesystem::path& base_dir = {});

ErrorKind parse_error_kind(std::string_view name);

class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(MockScript script);

  ChatResponse send(const ChatRequest& request) override;

  [[nodiscard]] int call_count() const;
  /// messages_key of each call, in call order.
  [[nodiscard]] std::vector<std::string> calls() const;

 private:
  std::optional<std::string> resolve(const ChatRequest& request, const std::string& key) const;

  MockScript script_;
  std::optional<std::regex> generator_re_;
  mutable std::mutex mutex_;
  int call_count_ = 0;
  std::vector<std::string> calls_;
  std::vector<int> key_fault_hits_;
};

}  // namespace corpuscoder::gateway
