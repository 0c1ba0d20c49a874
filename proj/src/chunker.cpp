#include "corpuscoder/chunker.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "corpuscoder/error.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::chunker {

std::size_t count_words(std::string_view text) noexcept {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

std::size_t estimate_tokens(std::string_view text) noexcept {
  const std::size_t words = count_words(text);
  return (words * 3 + 1) / 2;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

void WindowSpec::validate() const {
  if (window_tokens == 0 || reserve_tokens >= window_tokens) {
    throw Error(ErrorKind::InvalidWindow,
                "reserve_tokens (" + std::to_string(reserve_tokens) +
                    ") must be below window_tokens (" + std::to_string(window_tokens) + ")");
  }
}

namespace {

std::string join(std::span<const std::string_view> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out.append(words[i]);
  }
  return out;
}

}  // namespace

ChunkPlan plan_chunks(std::string_view text, const WindowSpec& spec, ChunkMode mode,
                      const TokenEstimator& estimator) {
  spec.validate();
  const std::size_t budget = spec.budget();
  ChunkPlan plan;
  plan.mode = mode;

  const std::size_t whole = estimator(text);
  if (whole <= budget) {
    plan.chunks.push_back({std::string(text), whole});
    return plan;
  }

  const auto words = split_words(text);
  std::span<const std::string_view> rest(words);
  while (!rest.empty()) {
    // Largest prefix length that fits, by binary search over a monotone estimator.
    std::size_t lo = 0;
    std::size_t hi = rest.size();
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      if (estimator(join(rest.first(mid))) <= budget) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    if (lo == 0) {
      throw Error(ErrorKind::WordTooLarge, "word '" + std::string(rest.front()) +
                                               "' does not fit a budget of " +
                                               std::to_string(budget) + " tokens");
    }
    std::string chunk_text = join(rest.first(lo));
    const std::size_t estimate = estimator(chunk_text);
    plan.chunks.push_back({std::move(chunk_text), estimate});
    if (mode == ChunkMode::Truncate) break;
    rest = rest.subspan(lo);
  }
  return plan;
}

double reassemble(std::span<const double> answers, ReassemblyPolicy policy) {
  if (answers.empty()) throw Error(ErrorKind::EmptyAnswers, "no per-chunk answers to combine");
  switch (policy) {
    case ReassemblyPolicy::Mean:
      return std::accumulate(answers.begin(), answers.end(), 0.0) /
             static_cast<double>(answers.size());
    case ReassemblyPolicy::Max:
      return *std::max_element(answers.begin(), answers.end());
    case ReassemblyPolicy::Majority: {
      std::map<double, std::size_t> counts;
      for (double a : answers) ++counts[a];
      // map iterates ascending, and only a strictly larger count replaces the
      // leader, so ties stay with the smaller value.
      auto best = counts.begin();
      for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      return best->first;
    }
  }
  return 0.0;
}

std::string_view to_string(ChunkMode mode) noexcept {
  return mode == ChunkMode::Split ? "split" : "truncate";
}

std::string_view to_string(ReassemblyPolicy policy) noexcept {
  switch (policy) {
    case ReassemblyPolicy::Mean: return "mean";
    case ReassemblyPolicy::Max: return "max";
    case ReassemblyPolicy::Majority: return "majority";
  }
  return "mean";
}

ChunkMode parse_chunk_mode(std::string_view text) {
  if (text == "truncate") return ChunkMode::Truncate;
  if (text == "split") return ChunkMode::Split;
  throw Error(ErrorKind::Config, "unknown chunk mode '" + std::string(text) + "'");
}

ReassemblyPolicy parse_reassembly_policy(std::string_view text) {
  if (text == "mean") return ReassemblyPolicy::Mean;
  if (text == "max") return ReassemblyPolicy::Max;
  if (text == "majority") return ReassemblyPolicy::Majority;
  throw Error(ErrorKind::Config, "unknown reassembly policy '" + std::string(text) + "'");
}

}  // namespace corpuscoder::chunker
