#include <httplib.h>

#include "corpuscoder/http_backend.hpp"

#include <cstdlib>

namespace corpuscoder::gateway {

namespace {

std::string error_message(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    if (j.contains("error") && j["error"].is_object()) {
      return j["error"].value("message", std::string()) + " (" + j["error"].value("code", std::string()) + ")";
    }
  } catch (const nlohmann::json::exception&) {
  }
  return std::string(utf8_prefix(body, 300));
}

}  // namespace

std::string api_key_from_env(const std::string& variable) {
  const char* value = std::getenv(variable.c_str());
  if (value == nullptr || *value == '\0') {
    throw Error(ErrorKind::AuthFailed, "environment variable " + variable + " is not set");
  }
  return value;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::Config, "endpoint must be an http(s) URL: " + config_.endpoint);
  }
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  httplib::Client client(origin_);
  if (!client.is_valid()) throw Error(ErrorKind::Config, "unsupported endpoint " + origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
  auto result = client.Post(path_, headers, to_json(request).dump(), "application/json");
  if (!result) {
    const auto err = result.error();
    throw Error(ErrorKind::Timeout, "request to " + origin_ + path_ + " failed: " + httplib::to_string(err));
  }
  const int status = result->status;
  const std::string& body = result->body;
  if (status == 401 || status == 403) {
    throw Error(ErrorKind::AuthFailed, "authentication rejected (HTTP " + std::to_string(status) + ")");
  }
  if (status == 429) throw Error(ErrorKind::RateLimited, "rate limited: " + error_message(body));
  if (status == 408) throw Error(ErrorKind::Timeout, "provider timeout (HTTP 408)");
  if (status >= 500) {
    throw Error(ErrorKind::ServerError, "HTTP " + std::to_string(status) + ": " + error_message(body));
  }
  if (status >= 400) {
    if (body.find("context_length_exceeded") != std::string::npos ||
        body.find("maximum context length") != std::string::npos) {
      throw Error(ErrorKind::ContextLengthExceeded, error_message(body));
    }
    throw Error(ErrorKind::InvalidRequest, "HTTP " + std::to_string(status) + ": " + error_message(body));
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedResponse, std::string("response is not JSON: ") + e.what());
  }
  return response_from_json(parsed);
}

}  // namespace corpuscoder::gateway
