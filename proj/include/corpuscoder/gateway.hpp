#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "corpuscoder/chat.hpp"
#include "corpuscoder/error.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::corpus {
class Corpus;
}
namespace corpuscoder::prompt {
class PromptSpec;
}

namespace corpuscoder::gateway {

using Duration = std::chrono::milliseconds;
using Sleeper = std::function<void(Duration)>;

/// std::this_thread::sleep_for.
void real_sleep(Duration d);

struct Price {
  double prompt_per_1k = 0.0;
  double completion_per_1k = 0.0;
};

class PriceTable {
 public:
  PriceTable() = default;
  explicit PriceTable(std::map<std::string, Price> prices) : prices_(std::move(prices)) {}

  void set(const std::string& model, Price price) { prices_[model] = price; }
  [[nodiscard]] const Price* find(const std::string& model) const;
  /// Throws Error{UnknownModel}.
  [[nodiscard]] const Price& at(const std::string& model) const;
  [[nodiscard]] double cost(const std::string& model, long long prompt_tokens,
                            long long completion_tokens) const;
  [[nodiscard]] bool empty() const noexcept { return prices_.empty(); }

 private:
  std::map<std::string, Price> prices_;
};

/// YAML, either a bare map or under a `prices:` key:
///   gpt-4: {prompt_per_1k: 0.03, completion_per_1k: 0.06}
PriceTable load_prices(const std::filesystem::path& path);
PriceTable parse_prices(std::string_view yaml_text);

struct RetryPolicy {
  int max_attempts = 5;
  Duration base_delay{1000};
  Duration max_delay{30000};
  double jitter_fraction = 0.1;

  /// Throws Error{Config} on max_attempts < 1, negative delays, or jitter outside [0, 1].
  void validate() const;
  /// min(base * 2^retry_index, max) before jitter; retry_index counts from 0.
  [[nodiscard]] Duration capped_delay(int retry_index) const noexcept;
};

/// Kinds that a retry may cure.
bool is_transient(ErrorKind kind) noexcept;

/// Spacing between request starts shared by every caller; 0 disables.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute = 0.0, Sleeper sleeper = real_sleep);
  void acquire();

 private:
  std::mutex mutex_;
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_slot_{};
  Sleeper sleeper_;
};

struct UsageEntry {
  std::string model;
  Usage usage;
  double cost = 0.0;
};

/// Token and spend accounting with an optional cap. Thread-safe. Before a
/// request the caller reserves the worst-case cost; the reservation is then
/// settled to the actual cost or released.
class UsageMeter {
 public:
  explicit UsageMeter(PriceTable prices = {}, std::optional<double> budget_cap = std::nullopt,
                      long long completion_bound = 1000);

  struct Reservation {
    std::uint64_t id = 0;
    double amount = 0.0;
  };

  /// Worst case for a request: prompt estimate plus max_tokens (or the
  /// configured completion bound).
  [[nodiscard]] double worst_case_cost(const ChatRequest& request) const;
  [[nodiscard]] long long completion_bound(const ChatRequest& request) const noexcept;

  /// Throws Error{BudgetExceeded} if spend + outstanding + amount > cap, and
  /// Error{UnknownModel} when a cap is set but the model has no price.
  Reservation reserve(const ChatRequest& request);
  void settle(const Reservation& reservation, const std::string& model, const Usage& usage);
  void release(const Reservation& reservation);

  [[nodiscard]] double spend() const;
  [[nodiscard]] long long total_prompt_tokens() const;
  [[nodiscard]] long long total_completion_tokens() const;
  [[nodiscard]] std::vector<UsageEntry> entries() const;
  [[nodiscard]] std::optional<double> budget_cap() const noexcept { return budget_cap_; }
  [[nodiscard]] const PriceTable& prices() const noexcept { return prices_; }

 private:
  PriceTable prices_;
  std::optional<double> budget_cap_;
  long long completion_bound_;
  mutable std::mutex mutex_;
  double spend_ = 0.0;
  double outstanding_ = 0.0;
  std::map<std::uint64_t, double> reservations_;
  std::uint64_t next_id_ = 1;
  long long prompt_tokens_ = 0;
  long long completion_tokens_ = 0;
  std::vector<UsageEntry> entries_;
};

/// One transport to a chat-completions provider. Implementations throw
/// Error with a gateway kind (AuthFailed, RateLimited, Timeout, ...).
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// Failure after the retry loop; carries the number of attempts made.
class GatewayError : public Error {
 public:
  GatewayError(ErrorKind kind, const std::string& message, int attempts)
      : Error(kind, message), attempts_(attempts) {}
  [[nodiscard]] int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

struct Completion {
  ChatResponse response;
  Usage usage;
  double cost = 0.0;
  int attempts = 0;
};

/// Retrying, metered, rate-limited front end over a backend. Safe to call
/// from several threads at once if the backend is.
class Gateway {
 public:
  Gateway(ChatBackend& backend, RetryPolicy policy, UsageMeter& meter, RateLimiter* limiter = nullptr,
          Sleeper sleeper = real_sleep, std::uint64_t jitter_seed = 0x5EED);

  /// Throws GatewayError. BudgetExceeded is raised before any network
  /// attempt; AuthFailed, ContextLengthExceeded and other non-transient
  /// errors are never retried.
  Completion complete(const ChatRequest& request);

  [[nodiscard]] const RetryPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] UsageMeter& meter() noexcept { return meter_; }
  /// Total time handed to the sleeper by the retry loop.
  [[nodiscard]] Duration total_backoff() const;

 private:
  Duration jittered(int retry_index);

  ChatBackend& backend_;
  RetryPolicy policy_;
  UsageMeter& meter_;
  RateLimiter* limiter_;
  Sleeper sleeper_;
  mutable std::mutex rng_mutex_;
  SplitMix64 rng_;
  Duration total_backoff_{0};
};

/// Estimated prompt tokens for the rendered request.
long long estimate_request_tokens(const ChatRequest& request);

struct CostEstimate {
  long long total_tokens = 0;
  double cost = 0.0;
};

/// Per document: instruction + text estimates + completion bound (max_tokens
/// or `completion_bound`), priced per 1K tokens. Throws Error{UnknownModel}.
CostEstimate estimate_cost(const corpus::Corpus& corpus, const prompt::PromptSpec& spec,
                           const PriceTable& prices, long long completion_bound = 1000);

}  // namespace corpuscoder::gateway
