#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "corpuscoder/corpus.hpp"
#include "corpuscoder/journal.hpp"
#include "corpuscoder/prompt.hpp"

namespace corpuscoder::reliability {

enum class Level { Nominal, Ordinal, Interval, Ratio };

std::string_view to_string(Level level) noexcept;
/// "nominal" | "ordinal" | "interval" | "ratio"; throws Error{Config}.
Level parse_level(std::string_view text);

/// Units x raters grid with missing cells.
class RatingMatrix {
 public:
  explicit RatingMatrix(Level level) : level_(level) {}

  /// Adds the unit/rater on first use. Re-setting a cell overwrites it.
  void set(const std::string& unit, const std::string& rater, double value);
  [[nodiscard]] std::optional<double> get(std::size_t unit, std::size_t rater) const;

  [[nodiscard]] const std::vector<std::string>& units() const noexcept { return units_; }
  [[nodiscard]] const std::vector<std::string>& raters() const noexcept { return raters_; }
  [[nodiscard]] Level level() const noexcept { return level_; }
  /// Values present for one unit, in rater order.
  [[nodiscard]] std::vector<double> unit_values(std::size_t unit) const;

 private:
  Level level_;
  std::vector<std::string> units_;
  std::vector<std::string> raters_;
  std::map<std::string, std::size_t> unit_index_;
  std::map<std::string, std::size_t> rater_index_;
  std::map<std::pair<std::size_t, std::size_t>, double> cells_;
};

/// Value-by-value coincidences. `values` is sorted ascending; o[c][k] and
/// n_c index into it.
struct CoincidenceMatrix {
  std::vector<double> values;
  std::vector<std::vector<double>> o;
  std::vector<double> n_c;
  double n = 0.0;
  std::size_t pairable_units = 0;
};

/// Every ordered pair of distinct rating slots in a unit with m >= 2 ratings
/// adds 1/(m-1) to o[c][k]. Throws Error{NoPairableUnits}.
CoincidenceMatrix coincidence_matrix(const RatingMatrix& matrix);

/// Squared difference between value indices c and k under `level`.
double delta_squared(Level level, const CoincidenceMatrix& cm, std::size_t c, std::size_t k);

struct AlphaResult {
  double alpha = 0.0;
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
  /// Pairable values n.
  std::size_t n_pairable = 0;
  std::size_t pairable_units = 0;
  Level level = Level::Interval;
  std::vector<std::string> warnings;
};

/// alpha = 1 - D_o / D_e. Ranges over [-1, 1]; negative values mean
/// systematic disagreement. Throws Error{NoPairableUnits}, Error{DegenerateData}
/// when D_e = 0, Error{InvalidData} for a ratio pair with c + k = 0.
AlphaResult krippendorff_alpha(const RatingMatrix& matrix);

struct AgreementSummary {
  /// Unordered value pairs (low, high) over pairable within-unit pairs.
  std::map<std::pair<double, double>, std::size_t> confusion;
  std::size_t pairs = 0;
  std::size_t agreeing = 0;
  [[nodiscard]] double percent() const noexcept {
    return pairs ? 100.0 * static_cast<double>(agreeing) / static_cast<double>(pairs) : 0.0;
  }
};

/// Throws Error{NoPairableUnits}.
AgreementSummary agreement_summary(const RatingMatrix& matrix);

/// A model answer usable for comparison.
struct LlmAnswer {
  std::string unit_id;
  double answer = 0.0;
  std::string motivation;
};

/// Done records whose answer has a numeric value (see prompt::answer_as_number).
std::vector<LlmAnswer> llm_answers(const journal::EffectiveState& state,
                                   const prompt::AnswerSchema* schema = nullptr);

inline constexpr const char* kLlmRater = "llm";

/// LLM as one rater alongside every human coder. Throws Error{NoOverlap}
/// when no unit has both an LLM answer and a human code.
RatingMatrix build_matrix(const std::vector<LlmAnswer>& llm, const corpus::HumanCodes& codes, Level level);

/// How several human codes on one unit collapse to one.
enum class Consensus { Mean, Majority };
std::string_view to_string(Consensus consensus) noexcept;

struct DisagreementRow {
  std::string unit_id;
  double llm_answer = 0.0;
  double human_answer = 0.0;
  double diff = 0.0;
  std::string motivation;
  std::string text_excerpt;
};

struct DisagreementReport {
  Consensus consensus = Consensus::Mean;
  bool ascending = false;
  std::vector<DisagreementRow> rows;
};

/// One row per unit coded by both sides, |llm - human| descending (or
/// ascending), ties by unit id. Excerpts are the first 200 code points of the
/// corpus text when a corpus is given. Throws Error{NoOverlap}.
DisagreementReport disagreement_report(const std::vector<LlmAnswer>& llm, const corpus::HumanCodes& codes,
                                       const corpus::Corpus* corpus, Consensus consensus = Consensus::Mean,
                                       bool ascending = false);

/// "# human_consensus=<policy>" then unit_id,llm_answer,human_answer,diff,motivation,text_excerpt.
std::string to_csv(const DisagreementReport& report);

}  // namespace corpuscoder::reliability
