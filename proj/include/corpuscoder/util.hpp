#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace corpuscoder {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Incremental SHA-256 for digests over several inputs.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  /// Length-prefixed update, so ("ab","c") and ("a","bc") hash differently.
  void update_field(std::string_view bytes);
  std::string hex_digest();

 private:
  void* ctx_;
};

/// Byte offset of the first invalid UTF-8 sequence, or nullopt when valid.
std::optional<std::size_t> find_invalid_utf8(std::string_view bytes) noexcept;

/// Prefix of `text` holding at most `max_code_points` code points.
/// Assumes valid UTF-8.
std::string_view utf8_prefix(std::string_view text, std::size_t max_code_points) noexcept;

std::string_view trim(std::string_view s) noexcept;
std::string_view trim_left(std::string_view s) noexcept;
bool is_space(char c) noexcept;

/// Whole-file read; throws Error{Io}.
std::string read_file(const std::filesystem::path& path);
/// Write via temp file + rename so readers never observe a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Shortest decimal text that round-trips to the same double ("1", "1.23", "-0.5").
std::string format_decimal(double value);
/// Strict '.'-decimal parse of the whole string; rejects inf/nan, commas, spaces.
std::optional<double> parse_decimal(std::string_view text) noexcept;

/// Current UTC time as RFC 3339 with millisecond precision, e.g. 2024-05-01T12:00:00.123Z.
std::string utc_now_rfc3339();

/// SplitMix64 (Steele, Lea, Flood 2014). The state advances by the golden
/// gamma 0x9E3779B97F4A7C15 and each output is the mixed state. Used wherever
/// the tool needs reproducible randomness across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) from the top 53 bits.
  double next_unit() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [0, bound) by rejection; bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

 private:
  std::uint64_t state_;
};

}  // namespace corpuscoder
