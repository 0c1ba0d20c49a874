#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpuscoder/error.hpp"
#include "corpuscoder/prompt.hpp"

namespace corpuscoder::journal {

inline constexpr const char* kFormat = "corpuscoder-journal/1";

enum class Status { Pending, Done, Failed };

std::string_view to_string(Status status) noexcept;

/// One write to the journal. Field names on disk: document_id, status,
/// answer, motivation, raw_response, prompt_version_hash, model, timestamp,
/// attempt_count, plus error_class/error_detail on Failed records.
struct AnnotationRecord {
  std::string document_id;
  Status status = Status::Pending;
  std::optional<prompt::Answer> answer;
  std::optional<std::string> motivation;
  std::optional<std::string> raw_response;
  std::string prompt_version_hash;
  std::string model;
  std::string timestamp;
  int attempt_count = 0;
  std::optional<std::string> error_class;
  std::optional<std::string> error_detail;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

nlohmann::json to_json(const AnnotationRecord& record);
/// Throws Error{JournalCorrupt} on missing or mistyped fields.
AnnotationRecord record_from_json(const nlohmann::json& j);

/// First line of a journal, and re-appended when a run is force-remapped.
struct JournalHeader {
  std::string corpus_digest;
  std::string prompt_version_hash;
  std::string run_config_digest;

  friend bool operator==(const JournalHeader&, const JournalHeader&) = default;
};

nlohmann::json to_json(const JournalHeader& header);

/// Parsed journal file. Line numbers are 1-based.
struct JournalContents {
  std::vector<JournalHeader> headers;
  /// (line number, record) in file order.
  std::vector<std::pair<std::size_t, AnnotationRecord>> records;
  /// Bytes up to and including the last complete line.
  std::size_t valid_bytes = 0;
  /// A trailing fragment without newline that does not parse was dropped.
  bool torn_tail = false;
  /// The final line parsed but its newline was never written.
  bool missing_final_newline = false;
};

/// Throws Error{Io} if unreadable, Error{JournalCorrupt} naming the first bad
/// line when any line other than an unterminated final one fails to parse.
JournalContents read_journal(const std::filesystem::path& path);
JournalContents parse_journal(std::string_view bytes);

struct EffectiveState {
  std::map<std::string, AnnotationRecord> records;
  /// Records replaced by a later record for the same document.
  std::size_t superseded = 0;
  std::optional<JournalHeader> header;
  bool torn_tail = false;
};

/// Last-write-wins fold over the journal.
EffectiveState load_effective_state(const std::filesystem::path& path);
EffectiveState fold(const JournalContents& contents);

/// Append-only writer. Each append is one write() of a full line followed by
/// fsync, so a crash leaves at most one partial final line.
class JournalWriter {
 public:
  /// Creates the file if needed. When the existing file ends in a torn
  /// fragment it is cut back to `valid_bytes`; a missing final newline is added.
  explicit JournalWriter(const std::filesystem::path& path,
                         const JournalContents* existing = nullptr);
  ~JournalWriter();
  JournalWriter(const JournalWriter&) = delete;
  JournalWriter& operator=(const JournalWriter&) = delete;

  void append(const AnnotationRecord& record);
  void append(const JournalHeader& header);

 private:
  void append_line(const std::string& line);

  std::filesystem::path path_;
  int fd_ = -1;
};

struct RepairResult {
  std::size_t kept_lines = 0;
  std::size_t dropped_bytes = 0;
  std::filesystem::path backup;
};

/// Cuts the journal back to the last valid line before the first corrupt
/// one, keeping the original as <path>.bak.
RepairResult repair_journal(const std::filesystem::path& path);

}  // namespace corpuscoder::journal
