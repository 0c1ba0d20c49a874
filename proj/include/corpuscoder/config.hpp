#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "corpuscoder/http_backend.hpp"
#include "corpuscoder/runner.hpp"

namespace corpuscoder::config {

inline constexpr const char* kConfigEnv = "CORPUSCODER_CONFIG";

/// Tool configuration. Built-in defaults, then the YAML file, then CLI flags.
struct AppConfig {
  std::string endpoint = gateway::kDefaultEndpointUrl;
  std::string api_key_env = "CORPUSCODER_API_KEY";
  int timeout_seconds = 120;
  gateway::PriceTable prices;
  /// Run defaults; paths stay empty here.
  runner::RunConfig run;
};

/// YAML layout:
///   endpoint: https://api.openai.com/v1/chat/completions
///   api_key_env: CORPUSCODER_API_KEY
///   timeout_seconds: 120
///   prices:
///     gpt-4: {prompt_per_1k: 0.03, completion_per_1k: 0.06}
///   defaults:
///     delay: 1.0            # seconds between requests per worker
///     concurrency: 1
///     budget: 10.0
///     mode: truncate        # truncate | split
///     reassembly: mean      # mean | max | majority
///     window_tokens: 32000
///     reserve_tokens: 2000
///     selection: random     # random | in_order
///     seed: 0
///     completion_bound: 1000
///     requests_per_minute: 0
///     retry: {max_attempts: 5, base_delay_ms: 1000, max_delay_ms: 30000, jitter: 0.1}
/// An `api_key` entry is rejected: keys come from the environment only.
AppConfig parse_config(std::string_view yaml_text);
AppConfig load_config(const std::filesystem::path& path);

/// Explicit path, else $CORPUSCODER_CONFIG, else built-in defaults.
AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace corpuscoder::config
