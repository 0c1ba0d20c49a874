#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "corpuscoder/chunker.hpp"
#include "corpuscoder/corpus.hpp"
#include "corpuscoder/gateway.hpp"
#include "corpuscoder/journal.hpp"
#include "corpuscoder/prompt.hpp"

namespace corpuscoder::runner {

struct InOrder {};
struct RandomOrder {
  std::uint64_t seed = 0;
};
using Selection = std::variant<RandomOrder, InOrder>;

struct RunConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path prompt_path;
  std::filesystem::path journal_path;

  gateway::Duration pacing_delay{1000};
  int concurrency = 1;
  Selection selection = RandomOrder{0};
  chunker::ChunkMode chunk_mode = chunker::ChunkMode::Truncate;
  chunker::WindowSpec window{};
  chunker::ReassemblyPolicy reassembly = chunker::ReassemblyPolicy::Mean;
  gateway::RetryPolicy retry{};
  std::optional<double> budget_cap;
  gateway::PriceTable prices{};
  long long completion_bound = 1000;
  double requests_per_minute = 0.0;
  bool retry_failed = false;
  bool force_remap = false;

  /// Throws Error{Config}.
  void validate() const;
  /// Digest of the settings that change what a record means (chunking,
  /// window, reassembly, selection).
  [[nodiscard]] std::string digest() const;
};

enum class Halt { None, BudgetExceeded, AuthFailed };

struct RunReport {
  /// Totals over the final effective state.
  std::size_t total = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  /// Documents already terminal when the run started and left alone.
  std::size_t skipped = 0;
  /// Records written by this invocation.
  std::size_t processed = 0;
  std::size_t requests = 0;
  std::size_t superseded = 0;
  double spend = 0.0;
  std::chrono::milliseconds wall{0};
  Halt halt = Halt::None;
  std::string halt_reason;
  bool torn_tail_discarded = false;
};

/// Test seams. `before_persist` runs after a document's requests complete
/// but before its record is written; `after_persist` receives the number of
/// records this invocation has written so far.
struct RunHooks {
  std::function<void(const std::string& document_id)> before_persist;
  std::function<void(std::size_t persisted)> after_persist;
  std::function<void(const std::string& message)> on_warning;
};

/// Annotates every pending document of `corpus`, one journal record each.
///
/// The journal is read first: records fold last-write-wins, a torn final
/// line is dropped, and the header must match the corpus digest and the
/// prompt hash (SpecMismatch otherwise, unless force_remap). Pending
/// documents are shuffled with SplitMix64(seed) for RandomOrder. The calling
/// thread is the only journal writer; with concurrency > 1 workers claim
/// documents from it and hand results back over a queue.
class Runner {
 public:
  Runner(const corpus::Corpus& corpus, const prompt::PromptSpec& spec, gateway::Gateway& gateway,
         RunConfig config, gateway::Sleeper pacing_sleeper = gateway::real_sleep, RunHooks hooks = {});

  RunReport run();

 private:
  struct Outcome;
  Outcome annotate(const corpus::Document& doc, int previous_attempts);

  const corpus::Corpus& corpus_;
  const prompt::PromptSpec& spec_;
  gateway::Gateway& gateway_;
  RunConfig config_;
  gateway::Sleeper pacing_sleeper_;
  RunHooks hooks_;
};

/// Loads corpus (normalized CSV, text column "text") and prompt from the
/// config paths, builds meter and gateway over `backend`, and runs.
RunReport run(const RunConfig& config, gateway::ChatBackend& backend, RunHooks hooks = {},
              gateway::Sleeper sleeper = gateway::real_sleep);

/// Whether a Failed record may be retried with --retry-failed.
bool is_retryable_failure(const journal::AnnotationRecord& record);

/// Corpus CSV with answer, motivation and status columns appended.
std::string export_results(const corpus::Corpus& corpus, const journal::EffectiveState& state);

}  // namespace corpuscoder::runner
