#include <doctest.h>

#include <atomic>
#include <thread>

#include "corpuscoder/chat.hpp"
#include "corpuscoder/error.hpp"
#include "corpuscoder/gateway.hpp"
#include "corpuscoder/mock_backend.hpp"
#include "corpuscoder/corpus.hpp"
#include "corpuscoder/prompt.hpp"
#include "support.hpp"

using namespace corpuscoder;
using namespace corpuscoder::gateway;

namespace {

ChatRequest request_for(const std::string& text, std::optional<int> max_tokens = std::nullopt) {
  ChatRequest r;
  r.max_tokens = max_tokens;
  r.messages = {{Role::System, "Rate it."}, {Role::User, text}};
  return r;
}

PriceTable gpt4_prices() { return parse_prices(testing::kFixturePrices); }

struct SleepLog {
  std::vector<Duration> sleeps;
  Sleeper sleeper() {
    return [this](Duration d) { sleeps.push_back(d); };
  }
};

}  // namespace

TEST_CASE("chat request json shape") {
  auto r = request_for("hello", 50);
  const auto j = to_json(r);
  CHECK(j["model"] == "gpt-4");
  CHECK(j["temperature"] == 0.2);
  CHECK(j["max_tokens"] == 50);
  CHECK(j["messages"][1]["role"] == "user");
  CHECK(request_from_json(j) == r);
  CHECK_FALSE(to_json(request_for("x")).contains("max_tokens"));
}

TEST_CASE("request validation") {
  auto r = request_for("x");
  r.temperature = 2.5;
  CHECK_THROWS_AS(r.validate(), Error);
  r = request_for("x");
  r.messages.push_back({Role::System, "late system"});
  CHECK_THROWS_AS(r.validate(), Error);
  r = request_for("");
  CHECK_THROWS_AS(r.validate(), Error);
  r = request_for("x", 0);
  CHECK_THROWS_AS(r.validate(), Error);
}

TEST_CASE("response parsing") {
  const auto j = nlohmann::json::parse(
      R"({"choices":[{"message":{"role":"assistant","content":"1; a"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}})");
  const auto r = response_from_json(j);
  CHECK(r.content == "1; a");
  CHECK(r.usage->prompt_tokens == 10);
  CHECK_FALSE(r.usage->estimated);
  CHECK_THROWS_AS(response_from_json(nlohmann::json::parse(R"({"choices":[]})")), Error);
  CHECK_THROWS_AS(response_from_json(nlohmann::json::parse(R"({"error":"x"})")), Error);
}

TEST_CASE("messages key is stable and content sensitive") {
  const auto a = request_for("x").messages;
  CHECK(messages_key(a) == messages_key(request_for("x").messages));
  CHECK(messages_key(a) != messages_key(request_for("y").messages));
  CHECK(messages_key(a).size() == 64);
}

TEST_CASE("price table") {
  const auto p = gpt4_prices();
  CHECK(p.cost("gpt-4", 1000, 1000) == doctest::Approx(0.09));
  CHECK_THROWS_AS((void)p.at("unknown"), Error);
  CHECK(parse_prices("prices:\n  m: {prompt_per_1k: 1, completion_per_1k: 2}\n").at("m").completion_per_1k == 2.0);
  CHECK_THROWS_AS(parse_prices("m: {prompt_per_1k: -1, completion_per_1k: 2}\n"), Error);
}

TEST_CASE("retry delays double up to the cap") {
  RetryPolicy p;
  CHECK(p.capped_delay(0) == Duration(1000));
  CHECK(p.capped_delay(1) == Duration(2000));
  CHECK(p.capped_delay(4) == Duration(16000));
  CHECK(p.capped_delay(5) == Duration(30000));
  CHECK(p.capped_delay(60) == Duration(30000));
  p.max_attempts = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("transient errors are retried with jittered backoff") {
  MockScript script;
  script.default_response = "1; ok";
  script.call_faults = {{{1, 2, 3}, ErrorKind::RateLimited}};
  MockBackend backend(script);
  UsageMeter meter;
  SleepLog log;
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, log.sleeper());
  const auto c = gw.complete(request_for("x"));
  CHECK(c.response.content == "1; ok");
  CHECK(c.attempts == 4);
  REQUIRE(log.sleeps.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double base = 1000.0 * (1 << i);
    CHECK(log.sleeps[i].count() >= base * 0.9 - 1);
    CHECK(log.sleeps[i].count() <= base * 1.1 + 1);
  }
  CHECK(gw.total_backoff().count() > 0);
}

TEST_CASE("retries stop at max_attempts") {
  MockScript script;
  script.default_response = "1; ok";
  script.call_faults = {{{1, 2, 3, 4, 5, 6}, ErrorKind::ServerError}};
  MockBackend backend(script);
  UsageMeter meter;
  SleepLog log;
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, log.sleeper());
  try {
    gw.complete(request_for("x"));
    FAIL("expected GatewayError");
  } catch (const GatewayError& e) {
    CHECK(e.kind() == ErrorKind::ServerError);
    CHECK(e.attempts() == 5);
  }
  CHECK(backend.call_count() == 5);
  CHECK(log.sleeps.size() == 4);
}

TEST_CASE("non-transient errors are not retried") {
  for (auto kind : {ErrorKind::AuthFailed, ErrorKind::ContextLengthExceeded, ErrorKind::InvalidRequest}) {
    MockScript script;
    script.default_response = "1; ok";
    script.call_faults = {{{1}, kind}};
    MockBackend backend(script);
    UsageMeter meter;
    SleepLog log;
    Gateway gw(backend, RetryPolicy{}, meter, nullptr, log.sleeper());
    try {
      gw.complete(request_for("x"));
      FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == kind);
      CHECK(e.attempts() == 1);
    }
    CHECK(log.sleeps.empty());
  }
}

TEST_CASE("budget is checked before any request") {
  MockScript script;
  script.default_response = "1; ok";
  MockBackend backend(script);
  // Worst case: prompt ~ (2+2 words)*1.5 tokens plus 1000 completion tokens.
  UsageMeter meter(gpt4_prices(), 0.01);
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, [](Duration) {});
  try {
    gw.complete(request_for("x"));
    FAIL("expected BudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BudgetExceeded);
  }
  CHECK(backend.call_count() == 0);
}

TEST_CASE("spend accumulates until the cap") {
  MockScript script;
  script.default_response = "1; ok";
  MockBackend backend(script);
  UsageMeter meter(gpt4_prices(), 1.0);
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, [](Duration) {});
  const auto req = request_for("some words here", 10);
  const double worst = meter.worst_case_cost(req);
  CHECK(worst > 0.0);
  int ok = 0;
  try {
    for (int i = 0; i < 100000; ++i) {
      gw.complete(req);
      ++ok;
    }
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BudgetExceeded);
  }
  CHECK(ok > 0);
  CHECK(meter.spend() <= 1.0);
  CHECK(meter.spend() + worst > 1.0);
  CHECK(meter.entries().size() == static_cast<std::size_t>(ok));
}

TEST_CASE("a cap with an unpriced model is an error") {
  UsageMeter meter(PriceTable{}, 1.0);
  auto req = request_for("x");
  req.model = "other";
  CHECK_THROWS_AS(meter.reserve(req), Error);
}

TEST_CASE("usage falls back to an estimate") {
  MockScript script;
  script.default_response = "1; ok then";
  script.report_usage = false;
  MockBackend backend(script);
  UsageMeter meter(gpt4_prices());
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, [](Duration) {});
  const auto c = gw.complete(request_for("a b c"));
  CHECK(c.usage.estimated);
  CHECK(c.usage.completion_tokens == 5);
  CHECK(c.usage.prompt_tokens == estimate_request_tokens(request_for("a b c")));
}

TEST_CASE("rate limiter spaces request starts") {
  std::vector<Duration> sleeps;
  RateLimiter limiter(60.0, [&](Duration d) { sleeps.push_back(d); });
  limiter.acquire();
  limiter.acquire();
  REQUIRE(sleeps.size() == 1);
  CHECK(sleeps[0].count() > 900);
  CHECK(sleeps[0].count() <= 1000);
}

TEST_CASE("cost estimate") {
  testing::TempDir dir;
  testing::write_text(dir / "m.csv", "id,text\na,one two three four\nb,five six\n");
  const auto c = corpus::load_corpus(dir / "m.csv");
  const prompt::PromptSpec spec("Rate it now.", prompt::NumericRange{});
  // Per document: instruction 5 tokens + text + 1000 completion.
  const auto est = estimate_cost(c, spec, gpt4_prices());
  CHECK(est.total_tokens == (5 + 6 + 1000) + (5 + 3 + 1000));
  CHECK(est.cost == doctest::Approx((5 + 6 + 5 + 3) * 0.03 / 1000 + 2000 * 0.06 / 1000));
  CHECK_THROWS_AS(estimate_cost(c, spec, PriceTable{}), Error);
}

TEST_CASE("mock resolution order") {
  auto script = parse_mock_script(R"({
    "responses": {"KEY": "0; keyed"},
    "rules": [{"contains": "[doc=d02]", "response": "1; rule"}],
    "generator": {"pattern": "\\[code=([0-9.]+)\\]", "format": "$1; generated"},
    "default": "2; default",
    "faults": [{"contains": "[doc=d04]", "times": 1, "error": "Timeout"}]
  })");
  const auto keyed = request_for("anything");
  script.responses = {{messages_key(keyed.messages), "0; keyed"}};
  MockBackend mock(script);
  CHECK(mock.send(keyed).content == "0; keyed");
  CHECK(mock.send(request_for("[doc=d02] [code=1.5]")).content == "1; rule");
  CHECK(mock.send(request_for("[doc=d03] [code=1.5]")).content == "1.5; generated");
  CHECK(mock.send(request_for("nothing")).content == "2; default");
  CHECK_THROWS_AS(mock.send(request_for("[doc=d04]")), Error);
  CHECK(mock.send(request_for("[doc=d04]")).content == "2; default");
  CHECK(mock.call_count() == 6);
  CHECK(mock.calls().size() == 6);
}

TEST_CASE("mock without an answer fails and bad scripts are rejected") {
  MockBackend empty(MockScript{});
  try {
    empty.send(request_for("x"));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedResponse);
  }
  CHECK_THROWS_AS(parse_mock_script(R"({"respones": {}})"), Error);
  CHECK_THROWS_AS(parse_mock_script(R"({"faults": [{"calls": [1], "error": "Nope"}]})"), Error);
  CHECK(parse_error_kind("RateLimited") == ErrorKind::RateLimited);
}

TEST_CASE("mock request log survives in a file") {
  testing::TempDir dir;
  testing::write_text(dir / "script.json", R"({"default": "1; x", "request_log": "calls.log"})");
  MockBackend mock(load_mock_script(dir / "script.json"));
  mock.send(request_for("a"));
  mock.send(request_for("b"));
  const auto log = testing::read_text(dir / "calls.log");
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  CHECK(log.rfind("2\t", 0) != 0);
}

TEST_CASE("gateway is safe under concurrent callers") {
  MockScript script;
  script.default_response = "1; ok";
  script.call_faults = {{{3, 7, 11}, ErrorKind::Timeout}};
  MockBackend backend(script);
  UsageMeter meter(gpt4_prices(), 1000.0);
  Gateway gw(backend, RetryPolicy{}, meter, nullptr, [](Duration) {});
  std::atomic<int> done{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 25; ++i) {
        gw.complete(request_for("x"));
        ++done;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(done == 100);
  CHECK(backend.call_count() == 103);
  CHECK(meter.entries().size() == 100);
}
