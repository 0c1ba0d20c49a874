#include <doctest.h>

#include <cmath>
#include <optional>
#include <random>

#include "corpuscoder/error.hpp"
#include "corpuscoder/reliability.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace corpuscoder;
using namespace corpuscoder::reliability;

namespace {

using Grid = oracles::Grid;

RatingMatrix to_matrix(const Grid& grid, Level level) {
  RatingMatrix m(level);
  for (std::size_t u = 0; u < grid.size(); ++u) {
    for (std::size_t r = 0; r < grid[u].size(); ++r) {
      if (grid[u][r]) m.set("u" + std::to_string(u), "r" + std::to_string(r), *grid[u][r]);
    }
  }
  return m;
}

oracles::Level oracle_level(Level l) {
  switch (l) {
    case Level::Nominal: return oracles::Level::Nominal;
    case Level::Ordinal: return oracles::Level::Ordinal;
    case Level::Interval: return oracles::Level::Interval;
    case Level::Ratio: return oracles::Level::Ratio;
  }
  return oracles::Level::Interval;
}

std::optional<double> library_alpha(const Grid& grid, Level level) {
  try {
    return krippendorff_alpha(to_matrix(grid, level)).alpha;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DegenerateData || e.kind() == ErrorKind::NoPairableUnits) return std::nullopt;
    throw;
  }
}

Grid random_grid(std::mt19937_64& rng, std::size_t units, std::size_t raters, int values, double missing) {
  Grid g(units, std::vector<std::optional<double>>(raters));
  std::uniform_real_distribution<double> u01(0, 1);
  for (auto& row : g) {
    for (auto& cell : row) {
      if (u01(rng) >= missing) cell = static_cast<double>(1 + rng() % values);
    }
  }
  return g;
}

// Krippendorff's standard reliability example: 4 coders, 12 units, with
// missing values (rows are coders, "." is missing).
Grid reference_example() {
  const std::optional<double> _;
  const std::vector<std::vector<std::optional<double>>> coders = {
      {1, 2, 3, 3, 2, 1, 4, 1, 2, _, _, _},
      {1, 2, 3, 3, 2, 2, 4, 1, 2, 5, _, 3},
      {_, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, _},
      {1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, _},
  };
  Grid g(12, std::vector<std::optional<double>>(4));
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t u = 0; u < 12; ++u) g[u][c] = coders[c][u];
  }
  return g;
}

}  // namespace

TEST_CASE("worked nominal case") {
  RatingMatrix m(Level::Nominal);
  m.set("1", "a", 1);
  m.set("1", "b", 1);
  m.set("2", "a", 2);
  m.set("2", "b", 2);
  m.set("3", "a", 1);
  m.set("3", "b", 2);
  const auto r = krippendorff_alpha(m);
  CHECK(r.alpha == doctest::Approx(4.0 / 9.0).epsilon(1e-12));
  CHECK(r.observed_disagreement == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(r.expected_disagreement == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(r.n_pairable == 6);
  CHECK(r.pairable_units == 3);
}

TEST_CASE("coincidence matrix of the worked case") {
  RatingMatrix m(Level::Nominal);
  m.set("1", "a", 1);
  m.set("1", "b", 1);
  m.set("2", "a", 2);
  m.set("2", "b", 2);
  m.set("3", "a", 1);
  m.set("3", "b", 2);
  const auto cm = coincidence_matrix(m);
  CHECK(cm.values == std::vector<double>{1, 2});
  CHECK(cm.o[0][0] == 2.0);
  CHECK(cm.o[0][1] == 1.0);
  CHECK(cm.o[1][0] == 1.0);
  CHECK(cm.o[1][1] == 2.0);
  CHECK(cm.n_c == std::vector<double>{3, 3});
  CHECK(cm.n == 6.0);
}

TEST_CASE("published reference values") {
  const auto g = reference_example();
  CHECK(*library_alpha(g, Level::Nominal) == doctest::Approx(0.743).epsilon(0.0015));
  CHECK(*library_alpha(g, Level::Ordinal) == doctest::Approx(0.815).epsilon(0.0015));
  CHECK(*library_alpha(g, Level::Interval) == doctest::Approx(0.849).epsilon(0.0015));
  CHECK(*library_alpha(g, Level::Ratio) == doctest::Approx(0.797).epsilon(0.0015));
}

TEST_CASE("perfect agreement and degenerate data") {
  RatingMatrix m(Level::Interval);
  m.set("1", "a", 0);
  m.set("1", "b", 0);
  m.set("2", "a", 2);
  m.set("2", "b", 2);
  CHECK(krippendorff_alpha(m).alpha == 1.0);

  RatingMatrix c(Level::Interval);
  c.set("1", "a", 1);
  c.set("1", "b", 1);
  c.set("2", "a", 1);
  c.set("2", "b", 1);
  try {
    krippendorff_alpha(c);
    FAIL("expected DegenerateData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateData);
  }

  RatingMatrix lonely(Level::Nominal);
  lonely.set("1", "a", 1);
  lonely.set("2", "b", 2);
  try {
    krippendorff_alpha(lonely);
    FAIL("expected NoPairableUnits");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoPairableUnits);
  }
}

TEST_CASE("ratio level edge cases") {
  RatingMatrix neg(Level::Ratio);
  neg.set("1", "a", -1);
  neg.set("1", "b", 1);
  neg.set("2", "a", 2);
  neg.set("2", "b", 3);
  CHECK_THROWS_AS(krippendorff_alpha(neg), Error);

  RatingMatrix warn(Level::Ratio);
  warn.set("1", "a", -1);
  warn.set("1", "b", -2);
  warn.set("2", "a", 3);
  warn.set("2", "b", 5);
  CHECK(krippendorff_alpha(warn).warnings.size() == 1);
}

TEST_CASE("systematic disagreement goes negative") {
  RatingMatrix m(Level::Nominal);
  m.set("1", "a", 1);
  m.set("1", "b", 2);
  m.set("2", "a", 2);
  m.set("2", "b", 1);
  CHECK(krippendorff_alpha(m).alpha < 0.0);
}

TEST_CASE("random matrices agree with the brute-force oracle at every level") {
  std::mt19937_64 rng(1234);
  int compared = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto g = random_grid(rng, 1 + rng() % 8, 2 + rng() % 3, 2 + static_cast<int>(rng() % 4), 0.25);
    for (auto level : {Level::Nominal, Level::Ordinal, Level::Interval, Level::Ratio}) {
      const auto ours = library_alpha(g, level);
      const auto ref = oracles::brute_force_alpha(g, oracle_level(level));
      REQUIRE(ours.has_value() == ref.has_value());
      if (ours) {
        REQUIRE(std::abs(*ours - *ref) < 1e-9);
        ++compared;
      }
    }
  }
  CHECK(compared > 4000);
}

TEST_CASE("property: alpha is invariant to unit and rater order") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    auto g = random_grid(rng, 2 + rng() % 6, 2 + rng() % 3, 3, 0.2);
    const auto base = library_alpha(g, Level::Interval);
    std::shuffle(g.begin(), g.end(), rng);
    for (auto& row : g) std::reverse(row.begin(), row.end());
    const auto permuted = library_alpha(g, Level::Interval);
    REQUIRE(base.has_value() == permuted.has_value());
    if (base) REQUIRE(std::abs(*base - *permuted) < 1e-12);
  }
}

TEST_CASE("property: interval alpha is invariant to affine maps, nominal to relabeling") {
  std::mt19937_64 rng(78);
  for (int i = 0; i < 300; ++i) {
    const auto g = random_grid(rng, 2 + rng() % 6, 2 + rng() % 3, 4, 0.2);
    Grid affine = g;
    Grid relabeled = g;
    for (std::size_t u = 0; u < g.size(); ++u) {
      for (std::size_t r = 0; r < g[u].size(); ++r) {
        if (!g[u][r]) continue;
        affine[u][r] = 3.0 * *g[u][r] - 7.0;
        relabeled[u][r] = 10.0 - *g[u][r] * *g[u][r];
      }
    }
    const auto a = library_alpha(g, Level::Interval);
    const auto b = library_alpha(affine, Level::Interval);
    REQUIRE(a.has_value() == b.has_value());
    if (a) REQUIRE(std::abs(*a - *b) < 1e-9);
    const auto c = library_alpha(g, Level::Nominal);
    const auto d = library_alpha(relabeled, Level::Nominal);
    REQUIRE(c.has_value() == d.has_value());
    if (c) REQUIRE(std::abs(*c - *d) < 1e-12);
  }
}

TEST_CASE("property: alpha never exceeds one and equals one without disagreement") {
  std::mt19937_64 rng(79);
  for (int i = 0; i < 300; ++i) {
    auto g = random_grid(rng, 2 + rng() % 6, 2 + rng() % 3, 4, 0.2);
    if (auto a = library_alpha(g, Level::Interval)) REQUIRE(*a <= 1.0 + 1e-12);
    for (auto& row : g) {
      std::optional<double> first;
      for (auto& cell : row) {
        if (cell && !first) first = cell;
        if (cell) cell = first;
      }
    }
    if (auto a = library_alpha(g, Level::Interval)) REQUIRE(*a == doctest::Approx(1.0));
  }
}

TEST_CASE("agreement summary") {
  RatingMatrix m(Level::Nominal);
  m.set("1", "a", 1);
  m.set("1", "b", 1);
  m.set("2", "a", 2);
  m.set("2", "b", 1);
  const auto s = agreement_summary(m);
  CHECK(s.pairs == 2);
  CHECK(s.agreeing == 1);
  CHECK(s.percent() == 50.0);
  CHECK(s.confusion.at({1.0, 2.0}) == 1);
}

namespace {

journal::EffectiveState state_with(const std::vector<std::pair<std::string, double>>& answers) {
  journal::EffectiveState s;
  for (const auto& [id, v] : answers) {
    journal::AnnotationRecord r;
    r.document_id = id;
    r.status = journal::Status::Done;
    r.answer = v;
    r.motivation = "because " + id;
    s.records[id] = r;
  }
  return s;
}

}  // namespace

TEST_CASE("llm answers join human codes") {
  auto state = state_with({{"d1", 1}, {"d2", 2}, {"d3", 0}});
  journal::AnnotationRecord f;
  f.document_id = "d4";
  f.status = journal::Status::Failed;
  f.raw_response = "x";
  state.records["d4"] = f;
  const auto llm = llm_answers(state);
  CHECK(llm.size() == 3);
  const auto codes = corpus::parse_codes("document_id,coder_id,value\nd1,h,1\nd2,h,1\nd4,h,2\nd9,h,0\n");
  const auto m = build_matrix(llm, codes, Level::Interval);
  CHECK(m.raters() == std::vector<std::string>{"llm", "h"});
  CHECK(m.units().size() == 5);
  CHECK(krippendorff_alpha(m).pairable_units == 2);
  CHECK_THROWS_AS(build_matrix(llm, corpus::parse_codes("document_id,coder_id,value\nd7,h,1\n"), Level::Interval),
                  Error);
  CHECK_THROWS_AS(build_matrix(llm, corpus::parse_codes("document_id,coder_id,value\nd1,llm,1\n"), Level::Interval),
                  Error);
}

TEST_CASE("disagreement report ordering and csv") {
  const auto llm = llm_answers(state_with({{"d1", 2}, {"d2", 0}, {"d3", 1}, {"d4", 1}}));
  const auto codes = corpus::parse_codes(
      "document_id,coder_id,value\nd1,a,0\nd1,b,1\nd2,a,0\nd3,a,0\nd3,b,0\nd3,c,2\nd4,a,2\n");
  const auto mean = disagreement_report(llm, codes, nullptr);
  REQUIRE(mean.rows.size() == 4);
  CHECK(mean.rows[0].unit_id == "d1");
  CHECK(mean.rows[0].diff == 1.5);
  CHECK(mean.rows[1].unit_id == "d4");
  CHECK(mean.rows[2].unit_id == "d3");
  CHECK(mean.rows[2].diff == doctest::Approx(1.0 / 3.0));
  CHECK(mean.rows[0].motivation == "because d1");
  const auto asc = disagreement_report(llm, codes, nullptr, Consensus::Mean, true);
  CHECK(asc.rows.front().unit_id == "d2");
  const auto maj = disagreement_report(llm, codes, nullptr, Consensus::Majority);
  const auto csv_text = to_csv(maj);
  CHECK(csv_text.rfind("# human_consensus=majority\nunit_id,llm_answer,human_answer,diff,motivation,text_excerpt\n", 0) ==
        0);
}

TEST_CASE("disagreement excerpts are capped at 200 code points") {
  testing::TempDir dir;
  std::string long_text;
  for (int i = 0; i < 300; ++i) long_text += "\xC3\xA9";
  testing::write_text(dir / "m.csv", "id,text\nd1," + long_text + "\n");
  const auto c = corpus::load_corpus(dir / "m.csv");
  const auto rep = disagreement_report(llm_answers(state_with({{"d1", 1}})),
                                       corpus::parse_codes("document_id,coder_id,value\nd1,a,0\n"), &c);
  CHECK(rep.rows[0].text_excerpt.size() == 400);
}
