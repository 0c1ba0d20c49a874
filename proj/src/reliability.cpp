#include "corpuscoder/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "corpuscoder/chunker.hpp"
#include "corpuscoder/csv.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::reliability {

std::string_view to_string(Level level) noexcept {
  switch (level) {
    case Level::Nominal: return "nominal";
    case Level::Ordinal: return "ordinal";
    case Level::Interval: return "interval";
    case Level::Ratio: return "ratio";
  }
  return "interval";
}

Level parse_level(std::string_view text) {
  if (text == "nominal") return Level::Nominal;
  if (text == "ordinal") return Level::Ordinal;
  if (text == "interval") return Level::Interval;
  if (text == "ratio") return Level::Ratio;
  throw Error(ErrorKind::Config, "unknown measurement level '" + std::string(text) + "'");
}

std::string_view to_string(Consensus consensus) noexcept {
  return consensus == Consensus::Mean ? "mean" : "majority";
}

void RatingMatrix::set(const std::string& unit, const std::string& rater, double value) {
  auto [u, new_unit] = unit_index_.try_emplace(unit, units_.size());
  if (new_unit) units_.push_back(unit);
  auto [r, new_rater] = rater_index_.try_emplace(rater, raters_.size());
  if (new_rater) raters_.push_back(rater);
  if (value == 0.0) value = 0.0;  // -0 and 0 are one category
  cells_[{u->second, r->second}] = value;
}

std::optional<double> RatingMatrix::get(std::size_t unit, std::size_t rater) const {
  auto it = cells_.find({unit, rater});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> RatingMatrix::unit_values(std::size_t unit) const {
  std::vector<double> out;
  for (auto it = cells_.lower_bound({unit, 0}); it != cells_.end() && it->first.first == unit; ++it) {
    out.push_back(it->second);
  }
  return out;
}

CoincidenceMatrix coincidence_matrix(const RatingMatrix& matrix) {
  CoincidenceMatrix cm;
  std::vector<std::vector<double>> pairable;
  for (std::size_t u = 0; u < matrix.units().size(); ++u) {
    auto values = matrix.unit_values(u);
    if (values.size() >= 2) pairable.push_back(std::move(values));
  }
  if (pairable.empty()) {
    throw Error(ErrorKind::NoPairableUnits, "no unit has two or more ratings");
  }
  for (const auto& unit : pairable) cm.values.insert(cm.values.end(), unit.begin(), unit.end());
  std::sort(cm.values.begin(), cm.values.end());
  cm.values.erase(std::unique(cm.values.begin(), cm.values.end()), cm.values.end());

  const std::size_t v = cm.values.size();
  cm.o.assign(v, std::vector<double>(v, 0.0));
  auto index_of = [&](double x) {
    return static_cast<std::size_t>(std::lower_bound(cm.values.begin(), cm.values.end(), x) - cm.values.begin());
  };
  for (const auto& unit : pairable) {
    const double weight = 1.0 / static_cast<double>(unit.size() - 1);
    std::vector<std::size_t> idx;
    idx.reserve(unit.size());
    for (double x : unit) idx.push_back(index_of(x));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        if (i != j) cm.o[idx[i]][idx[j]] += weight;
      }
    }
  }
  cm.n_c.assign(v, 0.0);
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < v; ++k) cm.n_c[c] += cm.o[c][k];
    cm.n += cm.n_c[c];
  }
  cm.pairable_units = pairable.size();
  return cm;
}

double delta_squared(Level level, const CoincidenceMatrix& cm, std::size_t c, std::size_t k) {
  if (c == k) return 0.0;
  const double a = cm.values[c];
  const double b = cm.values[k];
  switch (level) {
    case Level::Nominal:
      return 1.0;
    case Level::Interval:
      return (a - b) * (a - b);
    case Level::Ratio: {
      const double sum = a + b;
      if (sum == 0.0) {
        throw Error(ErrorKind::InvalidData, "ratio difference undefined for values " + format_decimal(a) +
                                                " and " + format_decimal(b));
      }
      const double r = (a - b) / sum;
      return r * r;
    }
    case Level::Ordinal: {
      const std::size_t lo = std::min(c, k);
      const std::size_t hi = std::max(c, k);
      double between = 0.0;
      for (std::size_t g = lo; g <= hi; ++g) between += cm.n_c[g];
      const double d = between - (cm.n_c[c] + cm.n_c[k]) / 2.0;
      return d * d;
    }
  }
  return 0.0;
}

AlphaResult krippendorff_alpha(const RatingMatrix& matrix) {
  const auto cm = coincidence_matrix(matrix);
  AlphaResult result;
  result.level = matrix.level();
  result.n_pairable = static_cast<std::size_t>(std::llround(cm.n));
  result.pairable_units = cm.pairable_units;
  if (matrix.level() == Level::Ratio && !cm.values.empty() && cm.values.front() < 0.0) {
    result.warnings.push_back("ratio level with negative values: the scale has no defined zero");
  }

  const std::size_t v = cm.values.size();
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < v; ++k) {
      if (c == k) continue;
      const double d2 = delta_squared(matrix.level(), cm, c, k);
      observed += cm.o[c][k] * d2;
      expected += cm.n_c[c] * cm.n_c[k] * d2;
    }
  }
  result.observed_disagreement = observed / cm.n;
  result.expected_disagreement = expected / (cm.n * (cm.n - 1.0));
  if (result.expected_disagreement <= 0.0) {
    throw Error(ErrorKind::DegenerateData,
                "expected disagreement is zero: every pairable rating has the same value, alpha is undefined");
  }
  result.alpha = 1.0 - result.observed_disagreement / result.expected_disagreement;
  return result;
}

AgreementSummary agreement_summary(const RatingMatrix& matrix) {
  AgreementSummary summary;
  for (std::size_t u = 0; u < matrix.units().size(); ++u) {
    const auto values = matrix.unit_values(u);
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = i + 1; j < values.size(); ++j) {
        const auto key = std::minmax(values[i], values[j]);
        ++summary.confusion[{key.first, key.second}];
        ++summary.pairs;
        if (values[i] == values[j]) ++summary.agreeing;
      }
    }
  }
  if (summary.pairs == 0) throw Error(ErrorKind::NoPairableUnits, "no unit has two or more ratings");
  return summary;
}

std::vector<LlmAnswer> llm_answers(const journal::EffectiveState& state, const prompt::AnswerSchema* schema) {
  std::vector<LlmAnswer> out;
  for (const auto& [id, rec] : state.records) {
    if (rec.status != journal::Status::Done || !rec.answer) continue;
    if (auto v = prompt::answer_as_number(*rec.answer, schema)) {
      out.push_back({id, *v, rec.motivation.value_or("")});
    }
  }
  return out;
}

RatingMatrix build_matrix(const std::vector<LlmAnswer>& llm, const corpus::HumanCodes& codes, Level level) {
  RatingMatrix matrix(level);
  std::set<std::string> llm_units;
  for (const auto& a : llm) {
    matrix.set(a.unit_id, kLlmRater, a.answer);
    llm_units.insert(a.unit_id);
  }
  bool overlap = false;
  for (const auto& e : codes.entries) {
    if (e.coder_id == kLlmRater) {
      throw Error(ErrorKind::InvalidData, "human coder id 'llm' is reserved for the model");
    }
    matrix.set(e.document_id, e.coder_id, e.value);
    overlap = overlap || llm_units.count(e.document_id) > 0;
  }
  if (!overlap) throw Error(ErrorKind::NoOverlap, "no document has both an LLM answer and a human code");
  return matrix;
}

DisagreementReport disagreement_report(const std::vector<LlmAnswer>& llm, const corpus::HumanCodes& codes,
                                       const corpus::Corpus* corpus, Consensus consensus, bool ascending) {
  std::map<std::string, std::vector<double>> human;
  for (const auto& e : codes.entries) human[e.document_id].push_back(e.value);

  DisagreementReport report;
  report.consensus = consensus;
  report.ascending = ascending;
  for (const auto& a : llm) {
    auto it = human.find(a.unit_id);
    if (it == human.end()) continue;
    const double h = chunker::reassemble(it->second, consensus == Consensus::Mean
                                                         ? chunker::ReassemblyPolicy::Mean
                                                         : chunker::ReassemblyPolicy::Majority);
    DisagreementRow row{a.unit_id, a.answer, h, std::fabs(a.answer - h), a.motivation, {}};
    if (corpus) {
      if (const auto* doc = corpus->find(a.unit_id)) row.text_excerpt = std::string(utf8_prefix(doc->text, 200));
    }
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty()) throw Error(ErrorKind::NoOverlap, "no document has both an LLM answer and a human code");
  std::sort(report.rows.begin(), report.rows.end(), [ascending](const auto& x, const auto& y) {
    if (x.diff != y.diff) return ascending ? x.diff < y.diff : x.diff > y.diff;
    return x.unit_id < y.unit_id;
  });
  return report;
}

std::string to_csv(const DisagreementReport& report) {
  std::string out = "# human_consensus=" + std::string(to_string(report.consensus)) + "\n";
  csv::append_row(out, {"unit_id", "llm_answer", "human_answer", "diff", "motivation", "text_excerpt"});
  for (const auto& r : report.rows) {
    csv::append_row(out, {r.unit_id, format_decimal(r.llm_answer), format_decimal(r.human_answer),
                          format_decimal(r.diff), r.motivation, r.text_excerpt});
  }
  return out;
}

}  // namespace corpuscoder::reliability
