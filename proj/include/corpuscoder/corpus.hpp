#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "corpuscoder/error.hpp"

namespace corpuscoder::corpus {

struct Document {
  std::string id;
  std::string text;
  /// Every non-reserved source column, in source column order.
  std::vector<std::pair<std::string, std::string>> metadata;
  std::size_t token_estimate = 0;
};

class Corpus {
 public:
  Corpus() = default;
  /// Throws Error{DuplicateId} if ids repeat.
  Corpus(std::vector<Document> documents, std::string source_digest);

  [[nodiscard]] const std::vector<Document>& documents() const noexcept { return documents_; }
  [[nodiscard]] const std::string& source_digest() const noexcept { return source_digest_; }
  [[nodiscard]] std::size_t size() const noexcept { return documents_.size(); }
  [[nodiscard]] bool empty() const noexcept { return documents_.empty(); }
  [[nodiscard]] const Document* find(std::string_view id) const;
  /// Metadata column names in first-seen order.
  [[nodiscard]] std::vector<std::string> metadata_columns() const;

 private:
  std::vector<Document> documents_;
  std::string source_digest_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Where document text comes from.
struct TextColumn {
  std::string name = "text";
};
struct TextDirectory {
  std::filesystem::path directory;
  std::string file_column = "file";
};

struct LoadOptions {
  std::string id_column = "id";
  std::variant<TextColumn, TextDirectory> text_source = TextColumn{};
};

struct IngestIssue {
  ErrorKind kind;
  /// 1-based data row (header excluded); 0 for file-level problems.
  std::size_t row = 0;
  std::string message;
};

/// Ingest failure carrying every row-level problem found. kind() is the
/// first issue's kind.
class IngestError : public Error {
 public:
  explicit IngestError(std::vector<IngestIssue> issues);
  [[nodiscard]] const std::vector<IngestIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<IngestIssue> issues_;
};

/// All-or-nothing ingest of a metadata CSV plus text. Reserved columns
/// ("id", "text", the file column, "answer", "motivation") never land in
/// metadata; "answer"/"motivation" (and "text" in directory mode) in the
/// source are a ReservedColumn error.
Corpus load_corpus(const std::filesystem::path& metadata_csv, const LoadOptions& options = {});

/// Normalized corpus CSV: id,text,<metadata columns>.
std::string to_normalized_csv(const Corpus& corpus);

/// Sampling via SplitMix64(seed) + Knuth's selection sampling (Algorithm S):
/// record i of N is kept with probability (n - kept) / (N - i), drawn as
/// next_unit() < that ratio. Returns indices in source order.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

/// CSV with columns id,text,<coder ids> where coder cells are blank.
/// Throws Error{SampleTooLarge} unless 1 <= n <= corpus size.
std::string export_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                          const std::vector<std::string>& coder_ids);

struct CodeEntry {
  std::string document_id;
  std::string coder_id;
  double value = 0.0;

  friend bool operator==(const CodeEntry&, const CodeEntry&) = default;
};

struct HumanCodes {
  std::vector<CodeEntry> entries;

  /// Throws IngestError{UnknownDocument} for ids absent from the corpus.
  void validate_against(const Corpus& corpus) const;
  [[nodiscard]] std::vector<std::string> coders() const;
};

/// Accepts the long layout (document_id,coder_id,value) or the wide layout
/// written by export_sample (id,text,<coder columns>). Blank cells are
/// skipped. Errors: MalformedValue(row), DuplicateId for a repeated
/// (document, coder) pair, MissingColumn.
HumanCodes import_codes(const std::filesystem::path& path);
HumanCodes parse_codes(std::string_view csv_text);

}  // namespace corpuscoder::corpus
