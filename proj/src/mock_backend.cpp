#include "corpuscoder/mock_backend.hpp"

#include <algorithm>
#include <fstream>

#include "corpuscoder/chunker.hpp"

namespace corpuscoder::gateway {

namespace {

const std::string& last_user_content(const ChatRequest& request) {
  static const std::string kEmpty;
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return kEmpty;
}

}  // namespace

ErrorKind parse_error_kind(std::string_view name) {
  static constexpr ErrorKind kKinds[] = {
      ErrorKind::AuthFailed,       ErrorKind::RateLimited,       ErrorKind::Timeout,
      ErrorKind::ServerError,      ErrorKind::ContextLengthExceeded, ErrorKind::MalformedResponse,
      ErrorKind::InvalidRequest,   ErrorKind::BudgetExceeded};
  for (auto k : kKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::Config, "unknown mock error kind '" + std::string(name) + "'");
}

MockScript parse_mock_script(std::string_view json_text, const std::filesystem::path& base_dir) {
  MockScript script;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorKind::Config, "mock script must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      static const std::vector<std::string> kKnown = {"responses", "rules",  "generator",  "default",
                                                      "faults",    "usage",  "request_log"};
      if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
        throw Error(ErrorKind::Config, "unknown mock script field '" + key + "'");
      }
    }
    if (j.contains("responses")) script.responses = j["responses"].get<std::map<std::string, std::string>>();
    if (j.contains("rules")) {
      for (const auto& r : j["rules"]) {
        script.rules.push_back({r.at("contains").get<std::string>(), r.at("response").get<std::string>()});
      }
    }
    if (j.contains("generator")) {
      script.generator = MockScript::RegexGenerator{j["generator"].at("pattern").get<std::string>(),
                                                    j["generator"].at("format").get<std::string>()};
    }
    if (j.contains("default") && !j["default"].is_null()) script.default_response = j["default"].get<std::string>();
    if (j.contains("faults")) {
      for (const auto& f : j["faults"]) {
        const auto kind = parse_error_kind(f.at("error").get<std::string>());
        if (f.contains("calls")) {
          script.call_faults.push_back({f["calls"].get<std::vector<int>>(), kind});
        } else {
          script.key_faults.push_back({f.value("key", std::string()), f.value("contains", std::string()),
                                       f.value("times", 1), kind});
        }
      }
    }
    script.report_usage = j.value("usage", true);
    if (j.contains("request_log")) {
      std::filesystem::path log = j["request_log"].get<std::string>();
      script.request_log = log.is_relative() && !base_dir.empty() ? base_dir / log : log;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("bad mock script: ") + e.what());
  }
  return script;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  return parse_mock_script(read_file(path), path.parent_path());
}

MockBackend::MockBackend(MockScript script)
    : script_(std::move(script)), key_fault_hits_(script_.key_faults.size(), 0) {
  if (script_.generator) {
    try {
      generator_re_.emplace(script_.generator->pattern);
    } catch (const std::regex_error& e) {
      throw Error(ErrorKind::Config, std::string("bad generator pattern: ") + e.what());
    }
  }
}

std::optional<std::string> MockBackend::resolve(const ChatRequest& request, const std::string& key) const {
  if (auto it = script_.responses.find(key); it != script_.responses.end()) return it->second;
  const auto& user = last_user_content(request);
  for (const auto& rule : script_.rules) {
    if (user.find(rule.contains) != std::string::npos) return rule.response;
  }
  if (generator_re_) {
    std::smatch m;
    if (std::regex_search(user, m, *generator_re_)) return m.format(script_.generator->format);
  }
  if (script_.generate) {
    if (auto r = script_.generate(request)) return r;
  }
  return script_.default_response;
}

ChatResponse MockBackend::send(const ChatRequest& request) {
  const std::string key = messages_key(request.messages);
  const auto& user = last_user_content(request);
  std::optional<ErrorKind> fault;
  {
    std::lock_guard lock(mutex_);
    const int call = ++call_count_;
    calls_.push_back(key);
    if (!script_.request_log.empty()) {
      std::ofstream log(script_.request_log, std::ios::app);
      log << call << '\t' << key << '\n' << std::flush;
    }
    for (const auto& f : script_.call_faults) {
      if (std::find(f.calls.begin(), f.calls.end(), call) != f.calls.end()) {
        fault = f.error;
        break;
      }
    }
    if (!fault) {
      for (std::size_t i = 0; i < script_.key_faults.size(); ++i) {
        const auto& f = script_.key_faults[i];
        const bool match = (!f.key.empty() && f.key == key) ||
                           (!f.contains.empty() && user.find(f.contains) != std::string::npos);
        if (match && key_fault_hits_[i] < f.times) {
          ++key_fault_hits_[i];
          fault = f.error;
          break;
        }
      }
    }
  }
  if (fault) throw Error(*fault, "mock: scheduled " + std::string(to_string(*fault)));

  auto content = resolve(request, key);
  if (!content) throw Error(ErrorKind::MalformedResponse, "mock: no scripted response for key " + key);
  ChatResponse resp;
  resp.content = std::move(*content);
  if (script_.report_usage) {
    resp.usage = Usage{estimate_request_tokens(request),
                       static_cast<long long>(chunker::estimate_tokens(resp.content)), false};
  }
  return resp;
}

int MockBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return call_count_;
}

std::vector<std::string> MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace corpuscoder::gateway
