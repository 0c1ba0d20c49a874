#include "corpuscoder/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "corpuscoder/config.hpp"
#include "corpuscoder/corpus.hpp"
#include "corpuscoder/csv.hpp"
#include "corpuscoder/http_backend.hpp"
#include "corpuscoder/journal.hpp"
#include "corpuscoder/mock_backend.hpp"
#include "corpuscoder/prompt.hpp"
#include "corpuscoder/reliability.hpp"
#include "corpuscoder/runner.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct IngestArgs {
  std::string metadata, text_col, text_dir, file_col = "file", id_col = "id", out;
};
struct CostArgs {
  std::string corpus, prompt, prices;
  bool json = false;
};
struct AnnotateArgs {
  std::string corpus, prompt, journal, mock, prices;
  int concurrency = 1;
  double delay = 1.0;
  double budget = 0.0;
  bool retry_failed = false;
  bool force_remap = false;
  bool in_order = false;
  std::uint64_t seed = 0;
  std::string mode, reassembly;
  std::size_t window_tokens = 0, reserve_tokens = 0;
};
struct ValidateArgs {
  std::string journal, human, level, prompt;
  bool json = false;
};
struct DisagreeArgs {
  std::string journal, human, out, corpus, prompt, consensus = "mean";
  bool ascending = false;
};
struct SampleArgs {
  std::string corpus, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> coders{"coder1"};
};
struct ImportArgs {
  std::string codes, corpus, out;
};
struct LintArgs {
  std::string prompt;
  std::size_t reserve_tokens = 0;
};
struct RepairArgs {
  std::string journal;
};
struct ExportArgs {
  std::string corpus, journal, out;
};
struct KeysArgs {
  std::string corpus, prompt, mode = "truncate";
  std::size_t window_tokens = 0, reserve_tokens = 0;
};

corpus::Corpus load_normalized(const std::string& path) {
  return corpus::load_corpus(path, {"id", corpus::TextColumn{"text"}});
}

std::string format_cost(double cost) { return fmt::format("{:.2f}", cost); }

int report_error(std::ostream& err, const Error& e) {
  err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
  switch (e.kind()) {
    case ErrorKind::BudgetExceeded: return kBudgetHalt;
    case ErrorKind::AuthFailed: return kAuthFailure;
    case ErrorKind::Io:
    case ErrorKind::Config:
    default: return kDataError;
  }
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("corpuscoder", sink);
  logger->set_pattern("%l: %v");
  return logger;
}

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  corpus::LoadOptions opts;
  opts.id_column = a.id_col;
  if (!a.text_dir.empty()) {
    opts.text_source = corpus::TextDirectory{a.text_dir, a.file_col};
  } else {
    opts.text_source = corpus::TextColumn{a.text_col.empty() ? "text" : a.text_col};
  }
  const auto c = corpus::load_corpus(a.metadata, opts);
  write_file_atomic(a.out, corpus::to_normalized_csv(c));
  write_file_atomic(fs::path(a.out).concat(".digest"), c.source_digest() + "\n");
  out << "ingested " << c.size() << " documents into " << a.out << " (source digest " << c.source_digest() << ")\n";
  return kOk;
}

int cmd_estimate_cost(const CostArgs& a, const config::AppConfig& cfg, std::ostream& out) {
  const auto c = load_normalized(a.corpus);
  const auto spec = prompt::load_prompt_spec(a.prompt);
  const auto prices = a.prices.empty() ? cfg.prices : gateway::load_prices(a.prices);
  const auto est = gateway::estimate_cost(c, spec, prices, cfg.run.completion_bound);
  if (a.json) {
    out << json{{"documents", c.size()}, {"total_tokens", est.total_tokens}, {"cost", est.cost},
                {"model", spec.model_params().model}}.dump(2)
        << "\n";
  } else {
    out << est.total_tokens << " tokens, " << format_cost(est.cost) << "\n";
  }
  return kOk;
}

int cmd_annotate(const AnnotateArgs& a, const config::AppConfig& cfg, const CLI::App& sub, std::ostream& out,
                 spdlog::logger& log) {
  runner::RunConfig run = cfg.run;
  run.corpus_path = a.corpus;
  run.prompt_path = a.prompt;
  run.journal_path = a.journal;
  if (sub.count("--concurrency")) run.concurrency = a.concurrency;
  if (sub.count("--delay")) {
    if (a.delay < 0) throw Error(ErrorKind::Config, "--delay must not be negative");
    run.pacing_delay = gateway::Duration(static_cast<long long>(std::llround(a.delay * 1000.0)));
  }
  if (sub.count("--budget")) run.budget_cap = a.budget;
  if (sub.count("--retry-failed")) run.retry_failed = true;
  if (sub.count("--force-remap")) run.force_remap = true;
  if (sub.count("--mode")) run.chunk_mode = chunker::parse_chunk_mode(a.mode);
  if (sub.count("--reassembly")) run.reassembly = chunker::parse_reassembly_policy(a.reassembly);
  if (sub.count("--window-tokens")) run.window.window_tokens = a.window_tokens;
  if (sub.count("--reserve-tokens")) run.window.reserve_tokens = a.reserve_tokens;
  if (sub.count("--in-order")) run.selection = runner::InOrder{};
  if (sub.count("--seed")) run.selection = runner::RandomOrder{a.seed};
  if (!a.prices.empty()) run.prices = gateway::load_prices(a.prices);

  std::unique_ptr<gateway::ChatBackend> backend;
  if (!a.mock.empty()) {
    backend = std::make_unique<gateway::MockBackend>(gateway::load_mock_script(a.mock));
  } else {
    gateway::HttpConfig http;
    http.endpoint = cfg.endpoint;
    http.timeout = std::chrono::seconds(cfg.timeout_seconds);
    http.api_key = gateway::api_key_from_env(cfg.api_key_env);
    backend = std::make_unique<gateway::HttpBackend>(std::move(http));
  }

  runner::RunHooks hooks;
  hooks.on_warning = [&](const std::string& m) { log.warn("{}", m); };
  const auto report = runner::run(run, *backend, hooks);

  out << "documents: " << report.total << "\n"
      << "done: " << report.done << "\n"
      << "failed: " << report.failed << "\n"
      << "skipped: " << report.skipped << "\n"
      << "processed: " << report.processed << "\n"
      << "requests: " << report.requests << "\n"
      << "spend: " << fmt::format("{:.4f}", report.spend) << "\n"
      << "wall_seconds: " << fmt::format("{:.3f}", report.wall.count() / 1000.0) << "\n";
  if (report.halt == runner::Halt::BudgetExceeded) {
    log.error("budget exhausted, run halted; rerun with a higher --budget to resume: {}", report.halt_reason);
    return kBudgetHalt;
  }
  if (report.halt == runner::Halt::AuthFailed) {
    log.error("authentication failed: {}", report.halt_reason);
    return kAuthFailure;
  }
  if (report.done + report.failed < report.total) return kCompletedWithFailures;
  return report.failed > 0 ? kCompletedWithFailures : kOk;
}

std::optional<prompt::PromptSpec> optional_spec(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return prompt::load_prompt_spec(path);
}

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  const auto level = reliability::parse_level(a.level);
  const auto state = journal::load_effective_state(a.journal);
  const auto codes = corpus::import_codes(a.human);
  const auto spec = optional_spec(a.prompt);
  const auto llm = reliability::llm_answers(state, spec ? &spec->schema() : nullptr);
  const auto matrix = reliability::build_matrix(llm, codes, level);
  const auto alpha = reliability::krippendorff_alpha(matrix);
  const auto summary = reliability::agreement_summary(matrix);
  if (a.json) {
    json confusion = json::array();
    for (const auto& [pair, count] : summary.confusion) {
      confusion.push_back({{"a", pair.first}, {"b", pair.second}, {"count", count}});
    }
    out << json{{"level", reliability::to_string(level)},
                {"alpha", alpha.alpha},
                {"observed_disagreement", alpha.observed_disagreement},
                {"expected_disagreement", alpha.expected_disagreement},
                {"n_pairable", alpha.n_pairable},
                {"pairable_units", alpha.pairable_units},
                {"units", matrix.units().size()},
                {"raters", matrix.raters()},
                {"percent_agreement", summary.percent()},
                {"pairs", summary.pairs},
                {"confusion", confusion},
                {"warnings", alpha.warnings}}
               .dump(2)
        << "\n";
  } else {
    out << "level: " << reliability::to_string(level) << "\n"
        << "alpha: " << fmt::format("{:.10f}", alpha.alpha) << "\n"
        << "observed_disagreement: " << fmt::format("{:.10f}", alpha.observed_disagreement) << "\n"
        << "expected_disagreement: " << fmt::format("{:.10f}", alpha.expected_disagreement) << "\n"
        << "pairable_values: " << alpha.n_pairable << "\n"
        << "pairable_units: " << alpha.pairable_units << "\n"
        << "raters: " << matrix.raters().size() << "\n"
        << "percent_agreement: " << fmt::format("{:.2f}", summary.percent()) << "\n";
    for (const auto& w : alpha.warnings) out << "warning: " << w << "\n";
  }
  return kOk;
}

int cmd_disagreements(const DisagreeArgs& a, std::ostream& out) {
  const auto state = journal::load_effective_state(a.journal);
  const auto codes = corpus::import_codes(a.human);
  const auto spec = optional_spec(a.prompt);
  std::optional<corpus::Corpus> c;
  if (!a.corpus.empty()) c = load_normalized(a.corpus);
  const auto consensus = a.consensus == "majority" ? reliability::Consensus::Majority : reliability::Consensus::Mean;
  if (a.consensus != "mean" && a.consensus != "majority") {
    throw Error(ErrorKind::Config, "--consensus must be mean or majority");
  }
  const auto report = reliability::disagreement_report(reliability::llm_answers(state, spec ? &spec->schema() : nullptr),
                                                       codes, c ? &*c : nullptr, consensus, a.ascending);
  write_file_atomic(a.out, reliability::to_csv(report));
  out << "wrote " << report.rows.size() << " rows to " << a.out << "\n";
  return kOk;
}

int cmd_export_sample(const SampleArgs& a, std::ostream& out) {
  const auto c = load_normalized(a.corpus);
  write_file_atomic(a.out, corpus::export_sample(c, a.n, a.seed, a.coders));
  out << "wrote " << a.n << " sampled documents to " << a.out << "\n";
  return kOk;
}

int cmd_import_codes(const ImportArgs& a, std::ostream& out) {
  const auto codes = corpus::import_codes(a.codes);
  if (!a.corpus.empty()) codes.validate_against(load_normalized(a.corpus));
  if (!a.out.empty()) {
    std::string text;
    csv::append_row(text, {"document_id", "coder_id", "value"});
    for (const auto& e : codes.entries) csv::append_row(text, {e.document_id, e.coder_id, format_decimal(e.value)});
    write_file_atomic(a.out, text);
  }
  out << "imported " << codes.entries.size() << " codes from " << codes.coders().size() << " coders\n";
  return kOk;
}

int cmd_lint(const LintArgs& a, const config::AppConfig& cfg, const CLI::App& sub, std::ostream& out) {
  const auto spec = prompt::load_prompt_spec(a.prompt);
  const std::size_t reserve = sub.count("--reserve-tokens") ? a.reserve_tokens : cfg.run.window.reserve_tokens;
  const auto findings = prompt::validate_spec(spec, reserve);
  out << "version_hash: " << spec.version_hash() << "\n";
  for (const auto& f : findings) out << f.code << ": " << f.message << "\n";
  if (findings.empty()) out << "no findings\n";
  return kOk;
}

int cmd_repair(const RepairArgs& a, std::ostream& out) {
  const auto r = journal::repair_journal(a.journal);
  out << "kept " << r.kept_lines << " lines, dropped " << r.dropped_bytes << " bytes; original saved as "
      << r.backup.string() << "\n";
  return kOk;
}

int cmd_export_results(const ExportArgs& a, std::ostream& out) {
  const auto c = load_normalized(a.corpus);
  const auto state = journal::load_effective_state(a.journal);
  write_file_atomic(a.out, runner::export_results(c, state));
  out << "wrote results for " << c.size() << " documents to " << a.out << "\n";
  return kOk;
}

int cmd_mock_keys(const KeysArgs& a, const config::AppConfig& cfg, const CLI::App& sub, std::ostream& out) {
  const auto c = load_normalized(a.corpus);
  const auto spec = prompt::load_prompt_spec(a.prompt);
  chunker::WindowSpec window = cfg.run.window;
  if (sub.count("--window-tokens")) window.window_tokens = a.window_tokens;
  if (sub.count("--reserve-tokens")) window.reserve_tokens = a.reserve_tokens;
  const auto mode = chunker::parse_chunk_mode(a.mode);
  std::string text;
  csv::append_row(text, {"id", "chunk", "key"});
  for (const auto& doc : c.documents()) {
    const auto plan = chunker::plan_chunks(doc.text, window, mode);
    for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
      csv::append_row(text, {doc.id, std::to_string(i), messages_key(prompt::render_messages(spec, plan.chunks[i].text))});
    }
  }
  out << text;
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Annotate text corpora with chat-completion models and check them against human codes."};
  app.name("corpuscoder");
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "YAML config (endpoint, prices, run defaults)")->check(CLI::ExistingFile);

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Load metadata CSV + text into a normalized corpus file");
  s_ingest->add_option("--metadata", ingest.metadata, "metadata CSV")->required()->check(CLI::ExistingFile);
  auto* text_col = s_ingest->add_option("--text-col", ingest.text_col, "column holding the text");
  auto* text_dir = s_ingest->add_option("--text-dir", ingest.text_dir, "directory of .txt files")->check(CLI::ExistingDirectory);
  s_ingest->add_option("--file-col", ingest.file_col, "column naming each text file (with --text-dir)")->capture_default_str();
  s_ingest->add_option("--id-col", ingest.id_col, "id column")->capture_default_str();
  s_ingest->add_option("--out", ingest.out, "normalized corpus CSV to write")->required();
  text_col->excludes(text_dir);

  CostArgs cost;
  auto* s_cost = app.add_subcommand("estimate-cost", "Worst-case token and cost totals for a run");
  s_cost->add_option("--corpus", cost.corpus)->required()->check(CLI::ExistingFile);
  s_cost->add_option("--prompt", cost.prompt)->required()->check(CLI::ExistingFile);
  s_cost->add_option("--prices", cost.prices, "price table YAML (default: config prices)")->check(CLI::ExistingFile);
  s_cost->add_flag("--json", cost.json);

  AnnotateArgs ann;
  auto* s_ann = app.add_subcommand("annotate", "Annotate pending documents; resumes from the journal");
  s_ann->add_option("--corpus", ann.corpus)->required()->check(CLI::ExistingFile);
  s_ann->add_option("--prompt", ann.prompt)->required()->check(CLI::ExistingFile);
  s_ann->add_option("--journal", ann.journal, "JSON Lines journal (created if missing)")->required();
  s_ann->add_option("--concurrency", ann.concurrency)->check(CLI::PositiveNumber);
  s_ann->add_option("--delay", ann.delay, "seconds between requests per worker");
  s_ann->add_option("--budget", ann.budget, "spend cap for this invocation")->check(CLI::NonNegativeNumber);
  s_ann->add_option("--mock", ann.mock, "scripted mock backend (JSON); no network")->check(CLI::ExistingFile);
  s_ann->add_option("--prices", ann.prices, "price table YAML")->check(CLI::ExistingFile);
  s_ann->add_flag("--retry-failed", ann.retry_failed, "re-run documents whose failure is retryable");
  s_ann->add_flag("--force-remap", ann.force_remap, "reuse a journal written for another corpus or prompt");
  s_ann->add_option("--mode", ann.mode, "truncate | split")->check(CLI::IsMember({"truncate", "split"}));
  s_ann->add_option("--reassembly", ann.reassembly, "mean | max | majority")->check(CLI::IsMember({"mean", "max", "majority"}));
  s_ann->add_option("--window-tokens", ann.window_tokens);
  s_ann->add_option("--reserve-tokens", ann.reserve_tokens);
  auto* seed_opt = s_ann->add_option("--seed", ann.seed, "seed for random document order");
  s_ann->add_flag("--in-order", ann.in_order, "process documents in corpus order")->excludes(seed_opt);

  ValidateArgs val;
  auto* s_val = app.add_subcommand("validate", "Krippendorff's alpha of the model against human codes");
  s_val->add_option("--journal", val.journal)->required()->check(CLI::ExistingFile);
  s_val->add_option("--human", val.human, "human codes CSV")->required()->check(CLI::ExistingFile);
  s_val->add_option("--level", val.level)->required()->check(CLI::IsMember({"nominal", "ordinal", "interval", "ratio"}));
  s_val->add_option("--prompt", val.prompt, "prompt spec, to map categorical labels")->check(CLI::ExistingFile);
  s_val->add_flag("--json", val.json);

  DisagreeArgs dis;
  auto* s_dis = app.add_subcommand("disagreements", "Write documents ranked by |model - human|");
  s_dis->add_option("--journal", dis.journal)->required()->check(CLI::ExistingFile);
  s_dis->add_option("--human", dis.human)->required()->check(CLI::ExistingFile);
  s_dis->add_option("--out", dis.out)->required();
  s_dis->add_option("--corpus", dis.corpus, "normalized corpus, for text excerpts")->check(CLI::ExistingFile);
  s_dis->add_option("--prompt", dis.prompt)->check(CLI::ExistingFile);
  s_dis->add_option("--consensus", dis.consensus, "mean | majority over several human coders")->capture_default_str();
  s_dis->add_flag("--ascending", dis.ascending, "smallest differences first");

  SampleArgs sample;
  auto* s_sample = app.add_subcommand("export-sample", "Write a random sample for human coding");
  s_sample->add_option("--corpus", sample.corpus)->required()->check(CLI::ExistingFile);
  s_sample->add_option("-n,--n", sample.n)->required();
  s_sample->add_option("--seed", sample.seed)->capture_default_str();
  s_sample->add_option("--coders", sample.coders, "coder column names")->delimiter(',')->capture_default_str();
  s_sample->add_option("--out", sample.out)->required();

  ImportArgs imp;
  auto* s_imp = app.add_subcommand("import-codes", "Read filled-in human codes");
  s_imp->add_option("--codes", imp.codes)->required()->check(CLI::ExistingFile);
  s_imp->add_option("--corpus", imp.corpus, "check ids against this corpus")->check(CLI::ExistingFile);
  s_imp->add_option("--out", imp.out, "write long-format codes CSV");

  LintArgs lint;
  auto* s_lint = app.add_subcommand("lint-prompt", "Check a prompt spec for common mistakes");
  s_lint->add_option("--prompt", lint.prompt)->required()->check(CLI::ExistingFile);
  s_lint->add_option("--reserve-tokens", lint.reserve_tokens);

  RepairArgs repair;
  auto* s_repair = app.add_subcommand("repair-journal", "Cut a corrupt journal back to its last valid line");
  s_repair->add_option("--journal", repair.journal)->required()->check(CLI::ExistingFile);

  ExportArgs exp;
  auto* s_exp = app.add_subcommand("export-results", "Merge answers and motivations onto the corpus CSV");
  s_exp->add_option("--corpus", exp.corpus)->required()->check(CLI::ExistingFile);
  s_exp->add_option("--journal", exp.journal)->required()->check(CLI::ExistingFile);
  s_exp->add_option("--out", exp.out)->required();

  KeysArgs keys;
  auto* s_keys = app.add_subcommand("mock-keys", "Print the mock lookup key of every request a run would send");
  s_keys->add_option("--corpus", keys.corpus)->required()->check(CLI::ExistingFile);
  s_keys->add_option("--prompt", keys.prompt)->required()->check(CLI::ExistingFile);
  s_keys->add_option("--mode", keys.mode)->check(CLI::IsMember({"truncate", "split"}))->capture_default_str();
  s_keys->add_option("--window-tokens", keys.window_tokens);
  s_keys->add_option("--reserve-tokens", keys.reserve_tokens);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kDataError;
  }

  auto logger = make_logger(err);
  try {
    const auto cfg = config::resolve_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path));
    if (*s_ingest) {
      if (!ingest.text_dir.empty() && ingest.text_col.size()) throw Error(ErrorKind::Config, "use --text-col or --text-dir, not both");
      return cmd_ingest(ingest, out);
    }
    if (*s_cost) return cmd_estimate_cost(cost, cfg, out);
    if (*s_ann) return cmd_annotate(ann, cfg, *s_ann, out, *logger);
    if (*s_val) return cmd_validate(val, out);
    if (*s_dis) return cmd_disagreements(dis, out);
    if (*s_sample) return cmd_export_sample(sample, out);
    if (*s_imp) return cmd_import_codes(imp, out);
    if (*s_lint) return cmd_lint(lint, cfg, *s_lint, out);
    if (*s_repair) return cmd_repair(repair, out);
    if (*s_exp) return cmd_export_results(exp, out);
    if (*s_keys) return cmd_mock_keys(keys, cfg, *s_keys, out);
  } catch (const corpus::IngestError& e) {
    for (const auto& issue : e.issues()) {
      err << "error: " << to_string(issue.kind) << ": ";
      if (issue.row) err << "row " << issue.row << ": ";
      err << issue.message << "\n";
    }
    return kDataError;
  } catch (const Error& e) {
    return report_error(err, e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kDataError;
}

}  // namespace corpuscoder::cli
