#include "corpuscoder/chat.hpp"

#include <json.hpp>

#include "corpuscoder/error.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  throw Error(ErrorKind::InvalidRequest, "unknown role '" + std::string(text) + "'");
}

void ChatRequest::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorKind::InvalidRequest, why); };
  if (model.empty()) bad("model is empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) bad("temperature must be in [0, 2]");
  if (max_tokens && *max_tokens <= 0) bad("max_tokens must be positive");
  if (messages.empty()) bad("no messages");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].content.empty()) bad("message " + std::to_string(i) + " has empty content");
    if (messages[i].role == Role::System && i != 0) bad("system message must come first");
  }
}

json to_json(const ChatRequest& request) {
  json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);
  return body;
}

ChatRequest request_from_json(const json& body) {
  try {
    ChatRequest req;
    req.model = body.at("model").get<std::string>();
    req.temperature = body.value("temperature", 1.0);
    if (body.contains("max_tokens") && !body["max_tokens"].is_null()) {
      req.max_tokens = body["max_tokens"].get<int>();
    }
    for (const auto& m : body.at("messages")) {
      req.messages.push_back({parse_role(m.at("role").get<std::string>()),
                              m.at("content").get<std::string>()});
    }
    return req;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidRequest, std::string("bad request body: ") + e.what());
  }
}

ChatResponse response_from_json(const json& body) {
  try {
    ChatResponse resp;
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) {
      throw Error(ErrorKind::MalformedResponse, "response has no choices");
    }
    for (const auto& choice : choices) {
      const auto& content = choice.at("message").at("content");
      if (!content.is_null()) resp.content += content.get<std::string>();
    }
    if (body.contains("usage") && body["usage"].is_object()) {
      const auto& u = body["usage"];
      resp.usage = Usage{u.value("prompt_tokens", 0LL), u.value("completion_tokens", 0LL), false};
    }
    return resp;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedResponse, std::string("unexpected response shape: ") + e.what());
  }
}

json to_json(const ChatResponse& response) {
  json body;
  body["choices"] = json::array(
      {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", response.content}}}}});
  if (response.usage) {
    body["usage"] = {{"prompt_tokens", response.usage->prompt_tokens},
                     {"completion_tokens", response.usage->completion_tokens},
                     {"total_tokens", response.usage->prompt_tokens + response.usage->completion_tokens}};
  }
  return body;
}

std::string messages_key(const std::vector<Message>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return sha256_hex(arr.dump());
}

}  // namespace corpuscoder
