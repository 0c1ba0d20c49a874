#include <doctest.h>

#include <set>

#include "corpuscoder/csv.hpp"
#include "corpuscoder/error.hpp"
#include "corpuscoder/mock_backend.hpp"
#include "corpuscoder/runner.hpp"
#include "support.hpp"

using namespace corpuscoder;
using namespace corpuscoder::runner;
using journal::Status;
using testing::TempDir;
using testing::write_text;

namespace {

struct Fixture {
  TempDir dir;
  RunConfig config;

  explicit Fixture(std::size_t docs = 20, const std::string& metadata = {}) {
    write_text(dir / "meta.csv", metadata.empty() ? testing::fixture_metadata(docs) : metadata);
    write_text(dir / "corpus.csv",
               corpus::to_normalized_csv(corpus::load_corpus(dir / "meta.csv")));
    write_text(dir / "prompt.yaml", testing::kFixturePrompt);
    config.corpus_path = dir / "corpus.csv";
    config.prompt_path = dir / "prompt.yaml";
    config.journal_path = dir / "journal.jsonl";
    config.pacing_delay = gateway::Duration(0);
  }

  RunReport run(gateway::ChatBackend& backend, RunHooks hooks = {}) {
    return runner::run(config, backend, std::move(hooks), [](gateway::Duration) {});
  }

  journal::EffectiveState state() const { return journal::load_effective_state(config.journal_path); }
};

gateway::MockScript planted_script() {
  return gateway::parse_mock_script(testing::fixture_mock());
}

std::size_t record_lines(const std::filesystem::path& journal_path) {
  return journal::read_journal(journal_path).records.size();
}

}  // namespace

TEST_CASE("a full run writes one Done record per document") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  const auto report = f.run(mock);
  CHECK(report.total == 20);
  CHECK(report.done == 20);
  CHECK(report.failed == 0);
  CHECK(report.processed == 20);
  CHECK(report.requests == 20);
  const auto state = f.state();
  REQUIRE(state.records.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& r = state.records.at(testing::doc_id(i));
    CHECK(r.status == Status::Done);
    CHECK(std::get<double>(*r.answer) == testing::planted_code(i));
    CHECK(*r.motivation == "planted code read back");
    CHECK(r.model == "gpt-4");
    CHECK(r.attempt_count == 1);
  }
  REQUIRE(state.header.has_value());
  CHECK(state.header->prompt_version_hash == prompt::load_prompt_spec(f.config.prompt_path).version_hash());
}

TEST_CASE("a second run skips terminal documents") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  const auto again = f.run(mock);
  CHECK(again.skipped == 20);
  CHECK(again.requests == 0);
  CHECK(again.done == 20);
  CHECK(mock.call_count() == 20);
  CHECK(record_lines(f.config.journal_path) == 20);
}

TEST_CASE("an interrupted run resumes without repeating persisted work") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  RunHooks hooks;
  hooks.after_persist = [](std::size_t n) {
    if (n == 7) throw std::runtime_error("simulated crash");
  };
  CHECK_THROWS(f.run(mock, hooks));
  CHECK(f.state().records.size() == 7);
  const auto resumed = f.run(mock);
  CHECK(resumed.processed == 13);
  CHECK(resumed.done == 20);
  CHECK(mock.call_count() == 20);
}

TEST_CASE("a crash between response and write costs one extra request") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  RunHooks hooks;
  int seen = 0;
  hooks.before_persist = [&](const std::string&) {
    if (++seen == 5) throw std::runtime_error("simulated crash");
  };
  CHECK_THROWS(f.run(mock, hooks));
  const auto resumed = f.run(mock);
  CHECK(resumed.done == 20);
  CHECK(mock.call_count() == 21);
  CHECK(record_lines(f.config.journal_path) == 20);
}

TEST_CASE("parse failures become Failed records and retry-failed revisits them") {
  Fixture f;
  auto script = planted_script();
  script.rules = {{"[doc=d03]", "strongly; no number here"}};
  gateway::MockBackend bad(script);
  const auto first = f.run(bad);
  CHECK(first.done == 19);
  CHECK(first.failed == 1);
  const auto rec = f.state().records.at("d03");
  CHECK(rec.status == Status::Failed);
  CHECK(*rec.error_class == "ParseFailure");
  CHECK(*rec.raw_response == "strongly; no number here");

  gateway::MockBackend good(planted_script());
  const auto skip = f.run(good);
  CHECK(skip.requests == 0);
  CHECK(skip.failed == 1);

  f.config.retry_failed = true;
  const auto retried = f.run(good);
  CHECK(retried.requests == 1);
  CHECK(retried.done == 20);
  CHECK(f.state().records.at("d03").attempt_count == 2);
}

TEST_CASE("context length errors are terminal failures that retry-failed leaves alone") {
  Fixture f;
  auto script = planted_script();
  script.key_faults = {{"", "[doc=d02]", 100, ErrorKind::ContextLengthExceeded}};
  gateway::MockBackend mock(script);
  CHECK(f.run(mock).failed == 1);
  CHECK(*f.state().records.at("d02").error_class == "ContextLengthExceeded");
  f.config.retry_failed = true;
  CHECK(f.run(mock).requests == 0);
}

TEST_CASE("transient errors are retried inside one document") {
  Fixture f;
  auto script = planted_script();
  script.key_faults = {{"", "[doc=d05]", 2, ErrorKind::RateLimited}};
  gateway::MockBackend mock(script);
  const auto report = f.run(mock);
  CHECK(report.done == 20);
  CHECK(f.state().records.at("d05").attempt_count == 3);
}

TEST_CASE("budget and auth failures halt without writing records") {
  SUBCASE("budget") {
    Fixture f;
    f.config.prices = gateway::parse_prices(testing::kFixturePrices);
    f.config.budget_cap = 0.0001;
    gateway::MockBackend mock(planted_script());
    const auto report = f.run(mock);
    CHECK(report.halt == Halt::BudgetExceeded);
    CHECK(mock.call_count() == 0);
    CHECK(f.state().records.empty());
  }
  SUBCASE("auth") {
    Fixture f;
    auto script = planted_script();
    script.call_faults = {{{3}, ErrorKind::AuthFailed}};
    gateway::MockBackend mock(script);
    const auto report = f.run(mock);
    CHECK(report.halt == Halt::AuthFailed);
    CHECK(report.processed == 2);
    CHECK(f.state().records.size() == 2);
  }
}

TEST_CASE("a changed prompt is refused unless remapped") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  std::string changed = testing::kFixturePrompt;
  changed.replace(changed.find("temperature: 0.2"), 16, "temperature: 0.0");
  write_text(f.dir / "prompt.yaml", changed);
  try {
    f.run(mock);
    FAIL("expected SpecMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpecMismatch);
  }
  f.config.force_remap = true;
  const auto remapped = f.run(mock);
  CHECK(remapped.processed == 20);
  CHECK(journal::read_journal(f.config.journal_path).headers.size() == 2);
  f.config.force_remap = false;
  CHECK(f.run(mock).requests == 0);
}

TEST_CASE("records for unknown documents are refused") {
  Fixture f;
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  write_text(f.dir / "meta.csv", testing::fixture_metadata(5));
  write_text(f.dir / "corpus.csv", corpus::to_normalized_csv(corpus::load_corpus(f.dir / "meta.csv")));
  try {
    f.run(mock);
    FAIL("expected SpecMismatch for the changed corpus");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpecMismatch);
  }
  f.config.force_remap = true;
  const auto remapped = f.run(mock);
  CHECK(remapped.total == 5);
  CHECK(remapped.done == 5);
  CHECK(remapped.processed == 0);
  f.config.force_remap = false;
  CHECK(f.run(mock).done == 5);
}

TEST_CASE("records outside the corpus are ignored under a matching header") {
  Fixture f(3);
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  auto bytes = testing::read_text(f.config.journal_path);
  const auto first_record = bytes.find('\n') + 1;
  const auto line_end = bytes.find('\n', first_record);
  auto line = bytes.substr(first_record, line_end - first_record + 1);
  const auto id_pos = line.find("\"d0");
  line.replace(id_pos + 1, 3, "zzz");
  testing::write_text(f.config.journal_path, bytes + line);
  const auto report = f.run(mock);
  CHECK(report.done == 3);
  CHECK(report.requests == 0);
}

TEST_CASE("random order is seeded and covers every document once") {
  auto order_for = [](std::uint64_t seed) {
    Fixture f;
    f.config.selection = RandomOrder{seed};
    gateway::MockBackend mock(planted_script());
    f.run(mock);
    return mock.calls();
  };
  const auto a = order_for(3);
  CHECK(a == order_for(3));
  CHECK(a != order_for(4));
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 20);

  Fixture f;
  f.config.selection = InOrder{};
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  const auto ids = journal::read_journal(f.config.journal_path).records;
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i].second.document_id == testing::doc_id(i));
}

TEST_CASE("pacing delay is applied between documents") {
  Fixture f(5);
  f.config.pacing_delay = gateway::Duration(1000);
  gateway::MockBackend mock(planted_script());
  std::vector<gateway::Duration> sleeps;
  runner::run(f.config, mock, {}, [&](gateway::Duration d) { sleeps.push_back(d); });
  CHECK(sleeps.size() == 4);
  for (auto d : sleeps) CHECK(d == gateway::Duration(1000));
}

TEST_CASE("concurrent workers produce the same final state") {
  Fixture serial;
  gateway::MockBackend a(planted_script());
  serial.run(a);
  Fixture parallel;
  parallel.config.concurrency = 4;
  gateway::MockBackend b(planted_script());
  const auto report = parallel.run(b);
  CHECK(report.done == 20);
  CHECK(b.call_count() == 20);
  const auto s1 = serial.state();
  const auto s2 = parallel.state();
  for (const auto& [id, rec] : s1.records) CHECK(s2.records.at(id).answer == rec.answer);
  CHECK(record_lines(parallel.config.journal_path) == 20);
}

TEST_CASE("concurrent workers stop on a crash and resume cleanly") {
  Fixture f;
  f.config.concurrency = 3;
  gateway::MockBackend mock(planted_script());
  RunHooks hooks;
  hooks.after_persist = [](std::size_t n) {
    if (n == 9) throw std::runtime_error("simulated crash");
  };
  CHECK_THROWS(f.run(mock, hooks));
  const auto resumed = f.run(mock);
  CHECK(resumed.done == 20);
  CHECK(record_lines(f.config.journal_path) == 20);
  CHECK(mock.call_count() <= 20 + 3);
}

TEST_CASE("split mode reassembles chunk answers") {
  std::string long_text;
  for (int i = 0; i < 30; ++i) long_text += "alpha ";
  long_text += "[code=2] ";
  for (int i = 0; i < 30; ++i) long_text += "beta ";
  long_text += "[code=1]";
  Fixture f(0, "id,text\nlong," + long_text + "\nshort,tiny [code=0.5]\n");
  f.config.chunk_mode = chunker::ChunkMode::Split;
  f.config.window = {60, 10};  // 50-token budget, 33 words per chunk
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  CHECK(mock.call_count() == 3);
  const auto state = f.state();
  CHECK(std::get<double>(*state.records.at("long").answer) == 1.5);
  CHECK(*state.records.at("long").motivation == "planted code read back | planted code read back");
  CHECK(std::get<double>(*state.records.at("short").answer) == 0.5);

  Fixture g(0, "id,text\nlong," + long_text + "\n");
  g.config.chunk_mode = chunker::ChunkMode::Split;
  g.config.window = {60, 10};
  g.config.reassembly = chunker::ReassemblyPolicy::Max;
  gateway::MockBackend mock2(planted_script());
  g.run(mock2);
  CHECK(std::get<double>(*g.state().records.at("long").answer) == 2.0);
}

TEST_CASE("truncate mode sends only the first chunk") {
  std::string long_text;
  for (int i = 0; i < 40; ++i) long_text += "alpha ";
  long_text += "[code=2]";
  Fixture f(0, "id,text\nlong,\"[code=1] " + long_text + "\"\n");
  f.config.window = {60, 10};
  gateway::MockBackend mock(planted_script());
  f.run(mock);
  CHECK(mock.call_count() == 1);
  CHECK(std::get<double>(*f.state().records.at("long").answer) == 1.0);
}

TEST_CASE("export results adds answer, motivation and status") {
  Fixture f(3);
  auto script = planted_script();
  script.rules = {{"[doc=d02]", "nonsense"}};
  gateway::MockBackend mock(script);
  f.run(mock);
  const auto c = corpus::load_corpus(f.config.corpus_path);
  const auto table = csv::parse(export_results(c, f.state()));
  CHECK(table.header == std::vector<std::string>{"id", "text", "party", "year", "answer", "motivation", "status"});
  CHECK(table.rows[0][4] == "0");
  CHECK(table.rows[1][6] == "Failed");
  CHECK(table.rows[2][6] == "Done");
}

TEST_CASE("run config validation and digest") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.concurrency = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  RunConfig a, b;
  CHECK(a.digest() == b.digest());
  b.chunk_mode = chunker::ChunkMode::Split;
  CHECK(a.digest() != b.digest());
}
