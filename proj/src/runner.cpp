#include "corpuscoder/runner.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "corpuscoder/csv.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::runner {

using journal::AnnotationRecord;
using journal::Status;

void RunConfig::validate() const {
  if (concurrency < 1) throw Error(ErrorKind::Config, "concurrency must be at least 1");
  if (pacing_delay.count() < 0) throw Error(ErrorKind::Config, "pacing delay must not be negative");
  window.validate();
  if (window.budget() < 2) {
    throw Error(ErrorKind::Config, "window budget must leave room for at least one word (2 tokens)");
  }
  retry.validate();
  if (budget_cap && *budget_cap < 0.0) throw Error(ErrorKind::Config, "budget must not be negative");
  if (requests_per_minute < 0.0) throw Error(ErrorKind::Config, "requests_per_minute must not be negative");
}

std::string RunConfig::digest() const {
  Sha256 h;
  h.update_field("run-config/1");
  h.update_field(chunker::to_string(chunk_mode));
  h.update_field(std::to_string(window.window_tokens));
  h.update_field(std::to_string(window.reserve_tokens));
  h.update_field(chunker::to_string(reassembly));
  if (const auto* r = std::get_if<RandomOrder>(&selection)) {
    h.update_field("random:" + std::to_string(r->seed));
  } else {
    h.update_field("in-order");
  }
  return h.hex_digest();
}

bool is_retryable_failure(const AnnotationRecord& record) {
  if (record.status != Status::Failed || !record.error_class) return false;
  static constexpr std::string_view kRetryable[] = {"RateLimited",    "Timeout",        "ServerError",
                                                    "ParseFailure",   "RangeViolation", "LabelViolation",
                                                    "MalformedResponse"};
  return std::find(std::begin(kRetryable), std::end(kRetryable), *record.error_class) != std::end(kRetryable);
}

struct Runner::Outcome {
  std::string document_id;
  std::optional<AnnotationRecord> record;
  Halt halt = Halt::None;
  std::string halt_reason;
  std::size_t requests = 0;
  std::exception_ptr error;
};

Runner::Runner(const corpus::Corpus& corpus, const prompt::PromptSpec& spec, gateway::Gateway& gateway,
               RunConfig config, gateway::Sleeper pacing_sleeper, RunHooks hooks)
    : corpus_(corpus),
      spec_(spec),
      gateway_(gateway),
      config_(std::move(config)),
      pacing_sleeper_(std::move(pacing_sleeper)),
      hooks_(std::move(hooks)) {}

Runner::Outcome Runner::annotate(const corpus::Document& doc, int previous_attempts) {
  Outcome out;
  out.document_id = doc.id;

  AnnotationRecord rec;
  rec.document_id = doc.id;
  rec.prompt_version_hash = spec_.version_hash();
  rec.model = spec_.model_params().model;
  int attempts = 0;
  std::vector<std::string> raws;

  auto finish = [&](AnnotationRecord r) {
    r.attempt_count = previous_attempts + attempts;
    r.timestamp = utc_now_rfc3339();
    out.requests = static_cast<std::size_t>(attempts);
    out.record = std::move(r);
    return std::move(out);
  };
  auto joined_raws = [&]() -> std::optional<std::string> {
    if (raws.empty()) return std::nullopt;
    std::string s;
    for (std::size_t i = 0; i < raws.size(); ++i) {
      if (i) s += "\n";
      s += raws[i];
    }
    return s;
  };
  auto failed = [&](std::string error_class, std::string detail) {
    rec.status = Status::Failed;
    rec.error_class = std::move(error_class);
    rec.error_detail = std::move(detail);
    rec.raw_response = joined_raws();
    return finish(std::move(rec));
  };

  chunker::ChunkPlan plan;
  try {
    plan = chunker::plan_chunks(doc.text, config_.window, config_.chunk_mode);
  } catch (const Error& e) {
    return failed(std::string(to_string(e.kind())), e.what());
  }

  std::vector<prompt::ParsedAnswer> answers;
  for (const auto& chunk : plan.chunks) {
    ChatRequest request;
    request.model = spec_.model_params().model;
    request.temperature = spec_.model_params().temperature;
    request.max_tokens = spec_.model_params().max_tokens;
    request.messages = prompt::render_messages(spec_, chunk.text);

    gateway::Completion completion;
    try {
      completion = gateway_.complete(request);
    } catch (const gateway::GatewayError& e) {
      attempts += e.attempts();
      if (e.kind() == ErrorKind::BudgetExceeded || e.kind() == ErrorKind::AuthFailed) {
        out.halt = e.kind() == ErrorKind::BudgetExceeded ? Halt::BudgetExceeded : Halt::AuthFailed;
        out.halt_reason = e.what();
        out.requests = static_cast<std::size_t>(attempts);
        return out;
      }
      return failed(std::string(to_string(e.kind())), e.what());
    }
    attempts += completion.attempts;
    raws.push_back(completion.response.content);

    auto parsed = prompt::parse_response(completion.response.content, spec_);
    if (!parsed.ok()) {
      return failed(std::string(to_string(parsed.error().kind)), parsed.error().detail);
    }
    answers.push_back(parsed.value());
  }

  rec.status = Status::Done;
  rec.raw_response = joined_raws();
  if (answers.size() == 1) {
    rec.answer = answers.front().answer;
    rec.motivation = answers.front().motivation;
    return finish(std::move(rec));
  }

  std::string motivation;
  std::vector<double> values;
  const auto* categorical = std::get_if<prompt::Categorical>(&spec_.schema());
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (i) motivation += " | ";
    motivation += answers[i].motivation;
    values.push_back(*prompt::answer_as_number(answers[i].answer, categorical ? &spec_.schema() : nullptr));
  }
  rec.motivation = std::move(motivation);
  if (categorical) {
    // Labels combine by majority over their index in the schema.
    std::vector<double> indices;
    for (const auto& a : answers) {
      const auto& label = std::get<std::string>(a.answer);
      indices.push_back(static_cast<double>(
          std::find(categorical->labels.begin(), categorical->labels.end(), label) - categorical->labels.begin()));
    }
    const auto idx = chunker::reassemble(indices, chunker::ReassemblyPolicy::Majority);
    rec.answer = categorical->labels[static_cast<std::size_t>(idx)];
  } else {
    rec.answer = chunker::reassemble(values, config_.reassembly);
  }
  return finish(std::move(rec));
}

RunReport Runner::run() {
  const auto started = std::chrono::steady_clock::now();
  config_.validate();
  if (config_.chunk_mode == chunker::ChunkMode::Split && std::holds_alternative<prompt::FreeText>(spec_.schema())) {
    throw Error(ErrorKind::Config, "split mode cannot reassemble free-text answers");
  }
  auto warn = [&](const std::string& msg) {
    if (hooks_.on_warning) hooks_.on_warning(msg);
  };

  RunReport report;
  const journal::JournalHeader current{corpus_.source_digest(), spec_.version_hash(), config_.digest()};

  journal::JournalContents contents;
  const bool exists = std::filesystem::exists(config_.journal_path);
  if (exists) contents = journal::read_journal(config_.journal_path);
  if (contents.torn_tail) {
    warn("discarding partial final journal line (interrupted write)");
    report.torn_tail_discarded = true;
  }

  const auto previous = contents.headers.empty() ? std::nullopt : std::optional(contents.headers.back());
  const bool mismatch = previous && (previous->corpus_digest != current.corpus_digest ||
                                     previous->prompt_version_hash != current.prompt_version_hash);
  if (mismatch && !config_.force_remap) {
    throw Error(ErrorKind::SpecMismatch,
                previous->corpus_digest != current.corpus_digest
                    ? "journal was written for a different corpus (use --force-remap to reuse it)"
                    : "journal was written with a different prompt (use --force-remap to reuse it)");
  }

  std::map<std::string, AnnotationRecord> state;
  for (const auto& [line, rec] : contents.records) {
    if (!corpus_.find(rec.document_id)) {
      if (config_.force_remap || (previous && previous->corpus_digest == current.corpus_digest)) continue;
      throw Error(ErrorKind::UnknownDocument, "journal line " + std::to_string(line) +
                                                  ": record for unknown document '" + rec.document_id + "'");
    }
    if (rec.prompt_version_hash != spec_.version_hash()) {
      // A header for the current prompt means an earlier remap already
      // retired these records.
      if (config_.force_remap || (previous && previous->prompt_version_hash == current.prompt_version_hash)) continue;
      throw Error(ErrorKind::SpecMismatch,
                  "journal line " + std::to_string(line) + " was produced by a different prompt version");
    }
    if (!state.insert_or_assign(rec.document_id, rec).second) ++report.superseded;
  }

  journal::JournalWriter writer(config_.journal_path, exists ? &contents : nullptr);
  if (!previous || *previous != current) writer.append(current);

  std::vector<std::size_t> pending;
  const auto& docs = corpus_.documents();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto it = state.find(docs[i].id);
    if (it == state.end() || it->second.status == Status::Pending) {
      pending.push_back(i);
    } else if (config_.retry_failed && is_retryable_failure(it->second)) {
      pending.push_back(i);
    } else {
      ++report.skipped;
    }
  }
  if (const auto* r = std::get_if<RandomOrder>(&config_.selection)) {
    SplitMix64 rng(r->seed);
    for (std::size_t i = pending.size(); i > 1; --i) {
      std::swap(pending[i - 1], pending[rng.next_below(i)]);
    }
  }
  std::vector<int> previous_attempts(docs.size(), 0);
  for (const auto& [id, rec] : state) {
    // every id in state is in the corpus; find() gives the index by address
    previous_attempts[static_cast<std::size_t>(corpus_.find(id) - docs.data())] = rec.attempt_count;
  }

  auto handle = [&](Outcome& outcome) {
    if (outcome.error) std::rethrow_exception(outcome.error);
    report.requests += outcome.requests;
    if (outcome.record) {
      if (hooks_.before_persist) hooks_.before_persist(outcome.document_id);
      writer.append(*outcome.record);
      state.insert_or_assign(outcome.document_id, *outcome.record);
      ++report.processed;
      if (hooks_.after_persist) hooks_.after_persist(report.processed);
    }
    if (outcome.halt != Halt::None && report.halt == Halt::None) {
      report.halt = outcome.halt;
      report.halt_reason = outcome.halt_reason;
    }
  };

  if (config_.concurrency == 1) {
    for (std::size_t k = 0; k < pending.size() && report.halt == Halt::None; ++k) {
      if (k > 0) pacing_sleeper_(config_.pacing_delay);
      const auto idx = pending[k];
      auto outcome = annotate(docs[idx], previous_attempts[idx]);
      handle(outcome);
    }
  } else {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::size_t> queue(pending.begin(), pending.end());
    std::deque<Outcome> results;
    bool stop = false;
    int running = 0;
    // A worker claims its next document only after its last result is
    // persisted, so at most `concurrency` responses are ever unwritten.
    std::size_t pushed = 0;
    std::size_t handled = 0;

    auto worker = [&] {
      bool first = true;
      for (;;) {
        std::size_t idx = 0;
        {
          std::lock_guard lock(mutex);
          if (stop || queue.empty()) break;
          idx = queue.front();
          queue.pop_front();
        }
        if (!first) pacing_sleeper_(config_.pacing_delay);
        first = false;
        Outcome outcome;
        try {
          outcome = annotate(docs[idx], previous_attempts[idx]);
        } catch (...) {
          outcome.document_id = docs[idx].id;
          outcome.error = std::current_exception();
        }
        std::unique_lock lock(mutex);
        if (outcome.halt != Halt::None || outcome.error) stop = true;
        results.push_back(std::move(outcome));
        const std::size_t mine = ++pushed;
        cv.notify_all();
        cv.wait(lock, [&] { return handled >= mine || stop; });
      }
      std::lock_guard lock(mutex);
      --running;
      cv.notify_all();
    };

    std::vector<std::thread> threads;
    const int n = std::min<int>(config_.concurrency, static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
    running = n;
    threads.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);

    try {
      for (;;) {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return !results.empty() || running == 0; });
        if (results.empty()) break;
        Outcome outcome = std::move(results.front());
        results.pop_front();
        lock.unlock();
        handle(outcome);
        lock.lock();
        ++handled;
        cv.notify_all();
      }
    } catch (...) {
      {
        std::lock_guard lock(mutex);
        stop = true;
      }
      cv.notify_all();
      for (auto& t : threads) t.join();
      throw;
    }
    for (auto& t : threads) t.join();
  }

  report.total = docs.size();
  for (const auto& doc : docs) {
    auto it = state.find(doc.id);
    if (it == state.end()) continue;
    if (it->second.status == Status::Done) ++report.done;
    if (it->second.status == Status::Failed) ++report.failed;
  }
  report.spend = gateway_.meter().spend();
  report.wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  return report;
}

RunReport run(const RunConfig& config, gateway::ChatBackend& backend, RunHooks hooks, gateway::Sleeper sleeper) {
  config.validate();
  const auto corpus = corpus::load_corpus(config.corpus_path, {"id", corpus::TextColumn{"text"}});
  const auto spec = prompt::load_prompt_spec(config.prompt_path);
  gateway::UsageMeter meter(config.prices, config.budget_cap, config.completion_bound);
  gateway::RateLimiter limiter(config.requests_per_minute, sleeper);
  gateway::Gateway gw(backend, config.retry, meter, &limiter, sleeper);
  Runner runner(corpus, spec, gw, config, sleeper, std::move(hooks));
  return runner.run();
}

std::string export_results(const corpus::Corpus& corpus, const journal::EffectiveState& state) {
  const auto meta_cols = corpus.metadata_columns();
  std::vector<std::string> header = {"id", "text"};
  header.insert(header.end(), meta_cols.begin(), meta_cols.end());
  header.insert(header.end(), {"answer", "motivation", "status"});
  std::string out;
  csv::append_row(out, header);
  for (const auto& doc : corpus.documents()) {
    std::vector<std::string> row = {doc.id, doc.text};
    for (const auto& col : meta_cols) {
      auto it = std::find_if(doc.metadata.begin(), doc.metadata.end(), [&](const auto& kv) { return kv.first == col; });
      row.push_back(it == doc.metadata.end() ? std::string() : it->second);
    }
    auto rec = state.records.find(doc.id);
    if (rec == state.records.end()) {
      row.insert(row.end(), {"", "", "Pending"});
    } else {
      row.push_back(rec->second.answer ? prompt::answer_to_string(*rec->second.answer) : std::string());
      row.push_back(rec->second.motivation.value_or(""));
      row.push_back(std::string(journal::to_string(rec->second.status)));
    }
    csv::append_row(out, row);
  }
  return out;
}

}  // namespace corpuscoder::runner
