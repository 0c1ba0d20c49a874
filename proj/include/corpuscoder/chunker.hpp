#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace corpuscoder::chunker {

/// Tokens per word under the 2/3-word heuristic, applied as ceil(words * 3 / 2).
std::size_t estimate_tokens(std::string_view text) noexcept;

/// Number of maximal runs of non-whitespace (ASCII whitespace only).
std::size_t count_words(std::string_view text) noexcept;

std::vector<std::string_view> split_words(std::string_view text);

/// Pluggable estimator; the default is `estimate_tokens`.
using TokenEstimator = std::function<std::size_t(std::string_view)>;

struct WindowSpec {
  std::size_t window_tokens = 32000;
  std::size_t reserve_tokens = 2000;

  /// Throws Error{InvalidWindow} unless reserve < window.
  void validate() const;
  [[nodiscard]] std::size_t budget() const noexcept { return window_tokens - reserve_tokens; }
};

enum class ChunkMode { Truncate, Split };

struct Chunk {
  std::string text;
  std::size_t token_estimate = 0;
};

struct ChunkPlan {
  ChunkMode mode = ChunkMode::Truncate;
  std::vector<Chunk> chunks;
};

/// Greedy word-boundary packing: each chunk takes the longest prefix of the
/// remaining words whose estimate fits the budget. Truncate keeps only the
/// first chunk. Text that already fits is returned unchanged as one chunk.
/// Throws Error{WordTooLarge} when a single word does not fit (budget < 2 for
/// the default estimator).
ChunkPlan plan_chunks(std::string_view text, const WindowSpec& spec, ChunkMode mode,
                      const TokenEstimator& estimator = estimate_tokens);

enum class ReassemblyPolicy { Mean, Max, Majority };

/// Mean, max, or most frequent value (ties go to the smaller value).
/// Throws Error{EmptyAnswers} on an empty list.
double reassemble(std::span<const double> answers, ReassemblyPolicy policy);

std::string_view to_string(ChunkMode mode) noexcept;
std::string_view to_string(ReassemblyPolicy policy) noexcept;
ChunkMode parse_chunk_mode(std::string_view text);
ReassemblyPolicy parse_reassembly_policy(std::string_view text);

}  // namespace corpuscoder::chunker
