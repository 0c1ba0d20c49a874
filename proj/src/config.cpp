#include "corpuscoder/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdlib>
#include <set>

#include "corpuscoder/util.hpp"

namespace corpuscoder::config {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(ErrorKind::Config, why); }

void check_keys(const YAML::Node& node, const std::set<std::string>& known, const std::string& where) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (key == "api_key") bad("API keys are read from the environment only; remove 'api_key' from " + where);
    if (!known.count(key)) bad("unknown setting '" + key + "' in " + where);
  }
}

gateway::Duration seconds(double s) {
  if (s < 0) bad("negative duration");
  return gateway::Duration(static_cast<gateway::Duration::rep>(std::llround(s * 1000.0)));
}

}  // namespace

AppConfig parse_config(std::string_view yaml_text) {
  AppConfig cfg;
  try {
    const YAML::Node root = YAML::Load(std::string(yaml_text));
    if (root.IsNull()) return cfg;
    if (!root.IsMap()) bad("config must be a mapping");
    check_keys(root, {"endpoint", "api_key_env", "timeout_seconds", "prices", "defaults"}, "config");
    if (root["endpoint"]) cfg.endpoint = root["endpoint"].as<std::string>();
    if (root["api_key_env"]) cfg.api_key_env = root["api_key_env"].as<std::string>();
    if (root["timeout_seconds"]) cfg.timeout_seconds = root["timeout_seconds"].as<int>();
    if (root["prices"]) {
      YAML::Emitter e;
      e << root["prices"];
      cfg.prices = gateway::parse_prices(e.c_str());
    }
    if (const auto d = root["defaults"]) {
      check_keys(d,
                 {"delay", "concurrency", "budget", "mode", "reassembly", "window_tokens", "reserve_tokens",
                  "selection", "seed", "completion_bound", "requests_per_minute", "retry"},
                 "defaults");
      auto& run = cfg.run;
      if (d["delay"]) run.pacing_delay = seconds(d["delay"].as<double>());
      if (d["concurrency"]) run.concurrency = d["concurrency"].as<int>();
      if (d["budget"]) run.budget_cap = d["budget"].as<double>();
      if (d["mode"]) run.chunk_mode = chunker::parse_chunk_mode(d["mode"].as<std::string>());
      if (d["reassembly"]) run.reassembly = chunker::parse_reassembly_policy(d["reassembly"].as<std::string>());
      if (d["window_tokens"]) run.window.window_tokens = d["window_tokens"].as<std::size_t>();
      if (d["reserve_tokens"]) run.window.reserve_tokens = d["reserve_tokens"].as<std::size_t>();
      const std::uint64_t seed = d["seed"] ? d["seed"].as<std::uint64_t>() : 0;
      const std::string selection = d["selection"] ? d["selection"].as<std::string>() : "random";
      if (selection == "random") {
        run.selection = runner::RandomOrder{seed};
      } else if (selection == "in_order") {
        run.selection = runner::InOrder{};
      } else {
        bad("selection must be 'random' or 'in_order'");
      }
      if (d["completion_bound"]) run.completion_bound = d["completion_bound"].as<long long>();
      if (d["requests_per_minute"]) run.requests_per_minute = d["requests_per_minute"].as<double>();
      if (const auto r = d["retry"]) {
        check_keys(r, {"max_attempts", "base_delay_ms", "max_delay_ms", "jitter"}, "defaults.retry");
        if (r["max_attempts"]) run.retry.max_attempts = r["max_attempts"].as<int>();
        if (r["base_delay_ms"]) run.retry.base_delay = gateway::Duration(r["base_delay_ms"].as<long long>());
        if (r["max_delay_ms"]) run.retry.max_delay = gateway::Duration(r["max_delay_ms"].as<long long>());
        if (r["jitter"]) run.retry.jitter_fraction = r["jitter"].as<double>();
      }
    }
  } catch (const YAML::Exception& e) {
    bad(std::string("bad config: ") + e.what());
  }
  cfg.run.prices = cfg.prices;
  cfg.run.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return load_config(*explicit_path);
  if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') return load_config(env);
  return AppConfig{};
}

}  // namespace corpuscoder::config
