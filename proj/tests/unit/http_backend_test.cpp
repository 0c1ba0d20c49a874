#include <doctest.h>

#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "corpuscoder/error.hpp"
#include "corpuscoder/http_backend.hpp"

using namespace corpuscoder;
using namespace corpuscoder::gateway;

namespace {

/// Local server answering with a fixed status and body; records the last request.
class FakeProvider {
 public:
  FakeProvider() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = req.body;
      last_content_type_ = req.get_header_value("Content-Type");
      res.status = status_;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  void reply(int status, std::string body) {
    status_ = status;
    body_ = std::move(body);
  }
  [[nodiscard]] std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

  std::string last_auth_, last_body_, last_content_type_;

 private:
  httplib::Server server_;
  int port_ = 0;
  int status_ = 200;
  std::string body_;
  std::thread thread_;
};

ChatRequest sample_request() {
  ChatRequest r;
  r.max_tokens = 20;
  r.messages = {{Role::System, "Rate it."}, {Role::User, "'text'"}};
  return r;
}

ErrorKind kind_for(FakeProvider& server, HttpBackend& backend, int status, const std::string& body) {
  server.reply(status, body);
  try {
    backend.send(sample_request());
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("wire format and bearer auth") {
  FakeProvider server;
  HttpBackend backend({server.url(), "sk-test-123", std::chrono::seconds(5)});
  server.reply(200, R"({"choices":[{"message":{"role":"assistant","content":"1.2; yes"}}],
                        "usage":{"prompt_tokens":7,"completion_tokens":2}})");
  const auto r = backend.send(sample_request());
  CHECK(r.content == "1.2; yes");
  CHECK(r.usage->completion_tokens == 2);
  CHECK(server.last_auth_ == "Bearer sk-test-123");
  CHECK(server.last_content_type_.find("application/json") != std::string::npos);
  const auto body = nlohmann::json::parse(server.last_body_);
  CHECK(body == to_json(sample_request()));
}

TEST_CASE("status codes map to error kinds") {
  FakeProvider server;
  HttpBackend backend({server.url(), "k", std::chrono::seconds(5)});
  CHECK(kind_for(server, backend, 401, "{}") == ErrorKind::AuthFailed);
  CHECK(kind_for(server, backend, 403, "{}") == ErrorKind::AuthFailed);
  CHECK(kind_for(server, backend, 429, "{}") == ErrorKind::RateLimited);
  CHECK(kind_for(server, backend, 408, "{}") == ErrorKind::Timeout);
  CHECK(kind_for(server, backend, 500, "{}") == ErrorKind::ServerError);
  CHECK(kind_for(server, backend, 503, "{}") == ErrorKind::ServerError);
  CHECK(kind_for(server, backend, 400, R"({"error":{"code":"context_length_exceeded"}})") ==
        ErrorKind::ContextLengthExceeded);
  CHECK(kind_for(server, backend, 400, R"({"error":{"code":"bad"}})") == ErrorKind::InvalidRequest);
  CHECK(kind_for(server, backend, 404, "{}") == ErrorKind::InvalidRequest);
  CHECK(kind_for(server, backend, 200, "not json") == ErrorKind::MalformedResponse);
  CHECK(kind_for(server, backend, 200, R"({"choices":"x"})") == ErrorKind::MalformedResponse);
}

TEST_CASE("unreachable endpoint is a timeout") {
  HttpBackend backend({"http://127.0.0.1:1/v1/chat/completions", "k", std::chrono::seconds(1)});
  try {
    backend.send(sample_request());
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Timeout);
  }
}

TEST_CASE("api key comes from the environment and is never echoed") {
  ::setenv("CORPUSCODER_TEST_KEY", "sk-secret-value", 1);
  CHECK(api_key_from_env("CORPUSCODER_TEST_KEY") == "sk-secret-value");
  ::unsetenv("CORPUSCODER_TEST_KEY");
  try {
    api_key_from_env("CORPUSCODER_TEST_KEY");
    FAIL("expected AuthFailed");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AuthFailed);
    CHECK(std::string(e.what()).find("CORPUSCODER_TEST_KEY") != std::string::npos);
  }
}
