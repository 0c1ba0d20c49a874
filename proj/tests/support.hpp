// Helpers shared by the unit and acceptance tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corpuscoder/cli.hpp"
#include "corpuscoder/util.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("corpuscoder-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const fs::path& path) { return corpuscoder::read_file(path); }

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "corpuscoder");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = corpuscoder::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Planted code for fixture document i (0-based): cycles through 0, 0.5, 1, 1.5, 2.
inline double planted_code(std::size_t i) { return static_cast<double>(i % 5) * 0.5; }

inline std::string doc_id(std::size_t i) {
  std::string id = std::to_string(i + 1);
  return "d" + std::string(id.size() < 2 ? 2 - id.size() : 0, '0') + id;
}

/// Metadata CSV for `n` documents whose text carries "[doc=<id>]" and
/// "[code=<planted>]" markers the scripted mock reads back.
inline std::string fixture_metadata(std::size_t n) {
  std::string csv = "id,party,year,text\n";
  for (std::size_t i = 0; i < n; ++i) {
    csv += doc_id(i) + ",party" + std::to_string(i % 3) + "," + std::to_string(2000 + i) +
           ",\"Speech " + std::to_string(i + 1) + " about the people and the elite, with a comma. [doc=" +
           doc_id(i) + "] [code=" + corpuscoder::format_decimal(planted_code(i)) + "]\"\n";
  }
  return csv;
}

/// Human codes CSV (long layout) equal to the planted codes.
inline std::string fixture_codes(std::size_t n) {
  std::string csv = "document_id,coder_id,value\n";
  for (std::size_t i = 0; i < n; ++i) {
    csv += doc_id(i) + ",alice," + corpuscoder::format_decimal(planted_code(i)) + "\n";
  }
  return csv;
}

inline const char* kFixturePrompt = R"(instruction: |
  Rate how strongly the speech casts politics as ordinary people against a corrupt elite. [Answer with a score from 0 to 2, a semicolon, and one sentence of reasoning.]
schema:
  type: numeric_range
  min: 0
  max: 2
separator: ";"
model:
  name: gpt-4
  temperature: 0.2
  max_tokens: 50
)";

inline const char* kFixturePrices = R"(gpt-4: {prompt_per_1k: 0.03, completion_per_1k: 0.06}
)";

/// Mock script answering every request with its planted code.
inline std::string fixture_mock(const std::string& extra = {}) {
  return R"({"generator": {"pattern": "\\[code=([0-9.]+)\\]", "format": "$1; planted code read back"})" + extra +
         "}";
}

}  // namespace testing
