#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace corpuscoder {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;
/// Throws Error{InvalidRequest} for anything but system/user/assistant.
Role parse_role(std::string_view text);

struct Message {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
  std::string model = "gpt-4";
  double temperature = 0.2;
  std::optional<int> max_tokens;
  std::vector<Message> messages;

  /// Throws Error{InvalidRequest}: empty model or messages, temperature
  /// outside [0, 2], non-positive max_tokens, empty content, or a system
  /// message anywhere but first.
  void validate() const;

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

struct Usage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  /// True when derived from the word heuristic rather than reported.
  bool estimated = false;

  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatResponse {
  std::string content;
  std::optional<Usage> usage;
};

/// Chat-completions request body: {"model","temperature","max_tokens"?,"messages":[{"role","content"}]}.
nlohmann::json to_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& body);

/// Reads choices[].message.content (concatenated in order) and usage.
/// Throws Error{MalformedResponse}.
ChatResponse response_from_json(const nlohmann::json& body);
nlohmann::json to_json(const ChatResponse& response);

/// Stable key for a message list: SHA-256 of the compact JSON array of
/// {"role","content"} objects.
std::string messages_key(const std::vector<Message>& messages);

}  // namespace corpuscoder
