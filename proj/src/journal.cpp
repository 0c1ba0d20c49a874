#include "corpuscoder/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "corpuscoder/util.hpp"

namespace corpuscoder::journal {

using nlohmann::json;

namespace {

[[noreturn]] void corrupt(std::size_t line, const std::string& why) {
  throw Error(ErrorKind::JournalCorrupt, "journal line " + std::to_string(line) + ": " + why);
}

Status parse_status(const std::string& s) {
  if (s == "Done") return Status::Done;
  if (s == "Failed") return Status::Failed;
  if (s == "Pending") return Status::Pending;
  throw Error(ErrorKind::JournalCorrupt, "unknown status '" + s + "'");
}

template <class T>
std::optional<T> optional_field(const json& j, const char* name) {
  if (!j.contains(name) || j[name].is_null()) return std::nullopt;
  return j[name].get<T>();
}

void io_fail(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorKind::Io, what + " " + path.string() + ": " + std::strerror(errno));
}

}  // namespace

std::string_view to_string(Status status) noexcept {
  switch (status) {
    case Status::Pending: return "Pending";
    case Status::Done: return "Done";
    case Status::Failed: return "Failed";
  }
  return "Pending";
}

json to_json(const AnnotationRecord& r) {
  json j;
  j["document_id"] = r.document_id;
  j["status"] = to_string(r.status);
  if (!r.answer) {
    j["answer"] = nullptr;
  } else if (const auto* d = std::get_if<double>(&*r.answer)) {
    j["answer"] = *d;
  } else {
    j["answer"] = std::get<std::string>(*r.answer);
  }
  j["motivation"] = r.motivation ? json(*r.motivation) : json(nullptr);
  j["raw_response"] = r.raw_response ? json(*r.raw_response) : json(nullptr);
  j["prompt_version_hash"] = r.prompt_version_hash;
  j["model"] = r.model;
  j["timestamp"] = r.timestamp;
  j["attempt_count"] = r.attempt_count;
  if (r.error_class) j["error_class"] = *r.error_class;
  if (r.error_detail) j["error_detail"] = *r.error_detail;
  return j;
}

AnnotationRecord record_from_json(const json& j) {
  try {
    AnnotationRecord r;
    r.document_id = j.at("document_id").get<std::string>();
    if (r.document_id.empty()) throw Error(ErrorKind::JournalCorrupt, "empty document_id");
    r.status = parse_status(j.at("status").get<std::string>());
    const auto& a = j.at("answer");
    if (a.is_number()) {
      r.answer = a.get<double>();
    } else if (a.is_string()) {
      r.answer = a.get<std::string>();
    } else if (!a.is_null()) {
      throw Error(ErrorKind::JournalCorrupt, "answer must be a number, string or null");
    }
    r.motivation = optional_field<std::string>(j, "motivation");
    r.raw_response = optional_field<std::string>(j, "raw_response");
    r.prompt_version_hash = j.at("prompt_version_hash").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.attempt_count = j.at("attempt_count").get<int>();
    r.error_class = optional_field<std::string>(j, "error_class");
    r.error_detail = optional_field<std::string>(j, "error_detail");
    if (r.status == Status::Done && !r.answer) throw Error(ErrorKind::JournalCorrupt, "Done record without answer");
    if (r.status == Status::Failed && !r.raw_response && !r.error_detail) {
      throw Error(ErrorKind::JournalCorrupt, "Failed record without raw_response or error_detail");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::JournalCorrupt, e.what());
  }
}

json to_json(const JournalHeader& h) {
  return {{"journal", kFormat},
          {"corpus_digest", h.corpus_digest},
          {"prompt_version_hash", h.prompt_version_hash},
          {"run_config_digest", h.run_config_digest}};
}

JournalContents parse_journal(std::string_view bytes) {
  JournalContents out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < bytes.size()) {
    ++line_no;
    const std::size_t nl = bytes.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    const std::string_view line = bytes.substr(pos, terminated ? nl - pos : std::string_view::npos);
    const std::size_t next = terminated ? nl + 1 : bytes.size();

    if (trim(line).empty()) {
      if (terminated) out.valid_bytes = next;
      pos = next;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      if (!terminated) {
        out.torn_tail = true;
        break;
      }
      corrupt(line_no, std::string("not valid JSON (") + e.what() + ")");
    }
    if (!j.is_object()) corrupt(line_no, "not a JSON object");
    std::optional<std::string> problem;
    try {
      if (j.contains("journal")) {
        if (j["journal"] != kFormat) {
          problem = "unsupported journal format";
        } else {
          out.headers.push_back({j.at("corpus_digest").get<std::string>(),
                                 j.at("prompt_version_hash").get<std::string>(),
                                 j.value("run_config_digest", std::string())});
        }
      } else {
        out.records.emplace_back(line_no, record_from_json(j));
      }
    } catch (const json::exception& e) {
      problem = e.what();
    } catch (const Error& e) {
      problem = e.what();
    }
    if (problem) corrupt(line_no, *problem);
    if (!terminated) out.missing_final_newline = true;
    out.valid_bytes = next;
    pos = next;
  }
  return out;
}

JournalContents read_journal(const std::filesystem::path& path) { return parse_journal(read_file(path)); }

EffectiveState fold(const JournalContents& contents) {
  EffectiveState state;
  if (!contents.headers.empty()) state.header = contents.headers.back();
  state.torn_tail = contents.torn_tail;
  for (const auto& [line, record] : contents.records) {
    auto [it, inserted] = state.records.insert_or_assign(record.document_id, record);
    if (!inserted) ++state.superseded;
  }
  return state;
}

EffectiveState load_effective_state(const std::filesystem::path& path) { return fold(read_journal(path)); }

JournalWriter::JournalWriter(const std::filesystem::path& path, const JournalContents* existing)
    : path_(path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_fail("cannot open journal", path);
  if (existing) {
    if (existing->torn_tail && ::ftruncate(fd_, static_cast<off_t>(existing->valid_bytes)) != 0) {
      io_fail("cannot truncate torn journal tail of", path);
    }
    if (existing->missing_final_newline) append_line("");
  }
}

JournalWriter::~JournalWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void JournalWriter::append_line(const std::string& line) {
  const std::string data = line + "\n";
  std::size_t written = 0;
  while (written < data.size()) {
    const ssize_t n = ::write(fd_, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("write to journal failed", path_);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) io_fail("fsync of journal failed", path_);
}

void JournalWriter::append(const AnnotationRecord& record) { append_line(to_json(record).dump()); }

void JournalWriter::append(const JournalHeader& header) { append_line(to_json(header).dump()); }

RepairResult repair_journal(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t keep = 0;
  std::size_t kept_lines = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) break;
    try {
      parse_journal(std::string_view(bytes).substr(pos, nl + 1 - pos));
    } catch (const Error&) {
      break;
    }
    keep = nl + 1;
    ++kept_lines;
    pos = nl + 1;
  }
  RepairResult result;
  result.kept_lines = kept_lines;
  result.dropped_bytes = bytes.size() - keep;
  result.backup = path;
  result.backup += ".bak";
  write_file_atomic(result.backup, bytes);
  write_file_atomic(path, std::string_view(bytes).substr(0, keep));
  return result;
}

}  // namespace corpuscoder::journal
