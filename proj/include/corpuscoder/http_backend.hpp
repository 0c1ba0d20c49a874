#pragma once

#include <chrono>
#include <string>

#include "corpuscoder/gateway.hpp"

namespace corpuscoder::gateway {

inline constexpr const char* kDefaultEndpointUrl = "https://api.openai.com/v1/chat/completions";
inline constexpr const char* kDefaultApiKeyEnv = "CORPUSCODER_API_KEY";

struct HttpConfig {
  std::string endpoint = kDefaultEndpointUrl;
  std::string api_key;
  std::chrono::seconds timeout{120};
};

/// Reads the key from the named environment variable; throws Error{AuthFailed}
/// when it is unset or empty. The key itself never appears in messages.
std::string api_key_from_env(const std::string& variable = kDefaultApiKeyEnv);

/// POSTs chat-completions JSON with a bearer token. Status mapping:
/// 401/403 AuthFailed, 429 RateLimited, 408 and transport timeouts Timeout,
/// 5xx ServerError, 400 carrying context_length_exceeded ContextLengthExceeded,
/// other 4xx InvalidRequest, unparseable 2xx MalformedResponse.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpConfig config);
  ChatResponse send(const ChatRequest& request) override;

 private:
  HttpConfig config_;
  std::string origin_;
  std::string path_;
};

}  // namespace corpuscoder::gateway
