#include "corpuscoder/gateway.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "corpuscoder/chunker.hpp"
#include "corpuscoder/corpus.hpp"
#include "corpuscoder/prompt.hpp"

namespace corpuscoder::gateway {

void real_sleep(Duration d) {
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

const Price* PriceTable::find(const std::string& model) const {
  auto it = prices_.find(model);
  return it == prices_.end() ? nullptr : &it->second;
}

const Price& PriceTable::at(const std::string& model) const {
  if (const auto* p = find(model)) return *p;
  throw Error(ErrorKind::UnknownModel, "no price configured for model '" + model + "'");
}

double PriceTable::cost(const std::string& model, long long prompt_tokens,
                        long long completion_tokens) const {
  const auto& p = at(model);
  return (static_cast<double>(prompt_tokens) * p.prompt_per_1k +
          static_cast<double>(completion_tokens) * p.completion_per_1k) /
         1000.0;
}

PriceTable parse_prices(std::string_view yaml_text) {
  try {
    YAML::Node root = YAML::Load(std::string(yaml_text));
    if (root.IsMap() && root["prices"]) root = root["prices"];
    if (!root.IsMap()) throw Error(ErrorKind::Config, "price table must be a mapping of model -> prices");
    PriceTable table;
    for (const auto& kv : root) {
      const auto model = kv.first.as<std::string>();
      const auto& v = kv.second;
      if (!v.IsMap() || !v["prompt_per_1k"] || !v["completion_per_1k"]) {
        throw Error(ErrorKind::Config, "price for '" + model + "' needs prompt_per_1k and completion_per_1k");
      }
      Price p{v["prompt_per_1k"].as<double>(), v["completion_per_1k"].as<double>()};
      if (p.prompt_per_1k < 0 || p.completion_per_1k < 0) {
        throw Error(ErrorKind::Config, "negative price for '" + model + "'");
      }
      table.set(model, p);
    }
    return table;
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::Config, std::string("bad price table: ") + e.what());
  }
}

PriceTable load_prices(const std::filesystem::path& path) { return parse_prices(read_file(path)); }

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw Error(ErrorKind::Config, "max_attempts must be at least 1");
  if (base_delay.count() < 0 || max_delay.count() < 0) throw Error(ErrorKind::Config, "negative retry delay");
  if (!(jitter_fraction >= 0.0 && jitter_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "jitter_fraction must be in [0, 1]");
  }
}

Duration RetryPolicy::capped_delay(int retry_index) const noexcept {
  auto d = base_delay;
  for (int i = 0; i < retry_index && d < max_delay; ++i) d *= 2;
  return std::min(d, max_delay);
}

bool is_transient(ErrorKind kind) noexcept {
  return kind == ErrorKind::RateLimited || kind == ErrorKind::Timeout || kind == ErrorKind::ServerError;
}

RateLimiter::RateLimiter(double requests_per_minute, Sleeper sleeper) : sleeper_(std::move(sleeper)) {
  if (requests_per_minute > 0.0) {
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(60.0 / requests_per_minute));
  }
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::duration wait{};
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    const auto slot = std::max(now, next_slot_);
    next_slot_ = slot + interval_;
    wait = slot - now;
  }
  if (wait.count() > 0) sleeper_(std::chrono::ceil<Duration>(wait));
}

UsageMeter::UsageMeter(PriceTable prices, std::optional<double> budget_cap, long long completion_bound)
    : prices_(std::move(prices)), budget_cap_(budget_cap), completion_bound_(completion_bound) {}

long long UsageMeter::completion_bound(const ChatRequest& request) const noexcept {
  return request.max_tokens ? *request.max_tokens : completion_bound_;
}

double UsageMeter::worst_case_cost(const ChatRequest& request) const {
  return prices_.cost(request.model, estimate_request_tokens(request), completion_bound(request));
}

UsageMeter::Reservation UsageMeter::reserve(const ChatRequest& request) {
  double amount = 0.0;
  if (budget_cap_ || prices_.find(request.model)) amount = worst_case_cost(request);
  std::lock_guard lock(mutex_);
  if (budget_cap_ && spend_ + outstanding_ + amount > *budget_cap_) {
    throw Error(ErrorKind::BudgetExceeded,
                "budget cap " + format_decimal(*budget_cap_) + " reached: spent " +
                    format_decimal(spend_) + ", next request may cost up to " + format_decimal(amount));
  }
  Reservation r{next_id_++, amount};
  outstanding_ += amount;
  reservations_.emplace(r.id, amount);
  return r;
}

void UsageMeter::settle(const Reservation& reservation, const std::string& model, const Usage& usage) {
  const double cost = prices_.find(model) ? prices_.cost(model, usage.prompt_tokens, usage.completion_tokens) : 0.0;
  std::lock_guard lock(mutex_);
  if (auto it = reservations_.find(reservation.id); it != reservations_.end()) {
    outstanding_ -= it->second;
    reservations_.erase(it);
  }
  spend_ += cost;
  prompt_tokens_ += usage.prompt_tokens;
  completion_tokens_ += usage.completion_tokens;
  entries_.push_back({model, usage, cost});
}

void UsageMeter::release(const Reservation& reservation) {
  std::lock_guard lock(mutex_);
  if (auto it = reservations_.find(reservation.id); it != reservations_.end()) {
    outstanding_ -= it->second;
    reservations_.erase(it);
  }
}

double UsageMeter::spend() const {
  std::lock_guard lock(mutex_);
  return spend_;
}

long long UsageMeter::total_prompt_tokens() const {
  std::lock_guard lock(mutex_);
  return prompt_tokens_;
}

long long UsageMeter::total_completion_tokens() const {
  std::lock_guard lock(mutex_);
  return completion_tokens_;
}

std::vector<UsageEntry> UsageMeter::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

Gateway::Gateway(ChatBackend& backend, RetryPolicy policy, UsageMeter& meter, RateLimiter* limiter,
                 Sleeper sleeper, std::uint64_t jitter_seed)
    : backend_(backend),
      policy_(policy),
      meter_(meter),
      limiter_(limiter),
      sleeper_(std::move(sleeper)),
      rng_(jitter_seed) {
  policy_.validate();
}

Duration Gateway::jittered(int retry_index) {
  const auto base = policy_.capped_delay(retry_index);
  std::lock_guard lock(rng_mutex_);
  const double factor = 1.0 + policy_.jitter_fraction * (2.0 * rng_.next_unit() - 1.0);
  const auto d = Duration(static_cast<Duration::rep>(std::llround(static_cast<double>(base.count()) * factor)));
  total_backoff_ += d;
  return d;
}

Duration Gateway::total_backoff() const {
  std::lock_guard lock(rng_mutex_);
  return total_backoff_;
}

Completion Gateway::complete(const ChatRequest& request) {
  try {
    request.validate();
  } catch (const Error& e) {
    throw GatewayError(e.kind(), e.what(), 0);
  }
  UsageMeter::Reservation reservation;
  try {
    reservation = meter_.reserve(request);
  } catch (const Error& e) {
    throw GatewayError(e.kind(), e.what(), 0);
  }

  for (int attempt = 1;; ++attempt) {
    try {
      if (limiter_) limiter_->acquire();
      ChatResponse response = backend_.send(request);
      Usage usage;
      if (response.usage) {
        usage = *response.usage;
      } else {
        usage = Usage{estimate_request_tokens(request),
                      static_cast<long long>(chunker::estimate_tokens(response.content)), true};
      }
      meter_.settle(reservation, request.model, usage);
      const auto entries_cost = meter_.prices().find(request.model)
                                    ? meter_.prices().cost(request.model, usage.prompt_tokens, usage.completion_tokens)
                                    : 0.0;
      return Completion{std::move(response), usage, entries_cost, attempt};
    } catch (const Error& e) {
      if (is_transient(e.kind()) && attempt < policy_.max_attempts) {
        sleeper_(jittered(attempt - 1));
        continue;
      }
      meter_.release(reservation);
      throw GatewayError(e.kind(), e.what(), attempt);
    }
  }
}

long long estimate_request_tokens(const ChatRequest& request) {
  long long total = 0;
  for (const auto& m : request.messages) total += static_cast<long long>(chunker::estimate_tokens(m.content));
  return total;
}

CostEstimate estimate_cost(const corpus::Corpus& corpus, const prompt::PromptSpec& spec,
                           const PriceTable& prices, long long completion_bound) {
  const auto& params = spec.model_params();
  const auto& price = prices.at(params.model);
  const long long instruction_tokens = static_cast<long long>(chunker::estimate_tokens(spec.instruction()));
  const long long completion = params.max_tokens ? *params.max_tokens : completion_bound;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  for (const auto& doc : corpus.documents()) {
    prompt_tokens += instruction_tokens + static_cast<long long>(doc.token_estimate);
    completion_tokens += completion;
  }
  return {prompt_tokens + completion_tokens,
          (static_cast<double>(prompt_tokens) * price.prompt_per_1k +
           static_cast<double>(completion_tokens) * price.completion_per_1k) /
              1000.0};
}

}  // namespace corpuscoder::gateway
