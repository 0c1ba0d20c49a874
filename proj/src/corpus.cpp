#include "corpuscoder/corpus.hpp"

#include <algorithm>
#include <set>

#include "corpuscoder/chunker.hpp"
#include "corpuscoder/csv.hpp"
#include "corpuscoder/util.hpp"

namespace corpuscoder::corpus {

namespace {

constexpr std::size_t kMaxReportedIssues = 100;

std::string describe(const std::vector<IngestIssue>& issues) {
  std::string msg;
  for (const auto& issue : issues) {
    if (!msg.empty()) msg += "\n";
    msg += std::string(to_string(issue.kind)) + ": ";
    if (issue.row) msg += "row " + std::to_string(issue.row) + ": ";
    msg += issue.message;
  }
  return msg;
}

[[noreturn]] void fail(ErrorKind kind, std::size_t row, std::string message) {
  throw IngestError({{kind, row, std::move(message)}});
}

}  // namespace

IngestError::IngestError(std::vector<IngestIssue> issues)
    : Error(issues.empty() ? ErrorKind::InvalidData : issues.front().kind, describe(issues)),
      issues_(std::move(issues)) {}

Corpus::Corpus(std::vector<Document> documents, std::string source_digest)
    : documents_(std::move(documents)), source_digest_(std::move(source_digest)) {
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    if (!index_.emplace(documents_[i].id, i).second) {
      fail(ErrorKind::DuplicateId, i + 1, "duplicate id '" + documents_[i].id + "'");
    }
  }
}

const Document* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &documents_[it->second];
}

std::vector<std::string> Corpus::metadata_columns() const {
  std::vector<std::string> cols;
  std::set<std::string> seen;
  for (const auto& doc : documents_) {
    for (const auto& [key, value] : doc.metadata) {
      if (seen.insert(key).second) cols.push_back(key);
    }
  }
  return cols;
}

Corpus load_corpus(const std::filesystem::path& metadata_csv, const LoadOptions& options) {
  const std::string bytes = [&] {
    try {
      return read_file(metadata_csv);
    } catch (const Error& e) {
      fail(ErrorKind::Io, 0, e.what());
    }
  }();
  if (auto bad = find_invalid_utf8(bytes)) {
    fail(ErrorKind::InvalidUtf8, 0,
         metadata_csv.string() + ": invalid UTF-8 at byte " + std::to_string(*bad));
  }
  csv::Table table;
  try {
    table = csv::parse(bytes);
  } catch (const Error& e) {
    fail(ErrorKind::MalformedCsv, 0, e.what());
  }

  const auto* dir_source = std::get_if<TextDirectory>(&options.text_source);
  const std::string text_col =
      dir_source ? dir_source->file_column : std::get<TextColumn>(options.text_source).name;

  std::vector<IngestIssue> issues;
  {
    std::set<std::string> seen;
    for (const auto& name : table.header) {
      if (!seen.insert(name).second) {
        issues.push_back({ErrorKind::MalformedCsv, 0, "duplicate column '" + name + "'"});
      }
    }
  }
  const auto id_idx = table.column(options.id_column);
  const auto text_idx = table.column(text_col);
  if (!id_idx) issues.push_back({ErrorKind::MissingColumn, 0, "missing id column '" + options.id_column + "'"});
  if (!text_idx) {
    issues.push_back({ErrorKind::MissingColumn, 0,
                      std::string(dir_source ? "missing file column '" : "missing text column '") +
                          text_col + "'"});
  }
  std::vector<std::string> reserved = {"answer", "motivation"};
  if (dir_source) reserved.push_back("text");
  for (const auto& name : reserved) {
    if (name != text_col && name != options.id_column && table.column(name)) {
      issues.push_back({ErrorKind::ReservedColumn, 0,
                        "column '" + name + "' is reserved and would be overwritten by results"});
    }
  }
  if (!issues.empty()) throw IngestError(std::move(issues));

  Sha256 digest;
  digest.update_field(bytes);

  std::vector<Document> docs;
  docs.reserve(table.rows.size());
  std::set<std::string> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (issues.size() >= kMaxReportedIssues) break;
    const std::size_t row_no = r + 1;
    const auto& row = table.rows[r];
    Document doc;
    doc.id = std::string(trim(row[*id_idx]));
    if (doc.id.empty()) {
      issues.push_back({ErrorKind::MalformedValue, row_no, "empty id"});
      continue;
    }
    if (!ids.insert(doc.id).second) {
      issues.push_back({ErrorKind::DuplicateId, row_no, "duplicate id '" + doc.id + "'"});
      continue;
    }

    if (dir_source) {
      const std::string rel = std::string(trim(row[*text_idx]));
      const auto path = dir_source->directory / rel;
      if (rel.empty() || !std::filesystem::is_regular_file(path)) {
        issues.push_back({ErrorKind::MissingTextFile, row_no, "text file not found: " + path.string()});
        continue;
      }
      doc.text = read_file(path);
      if (auto bad = find_invalid_utf8(doc.text)) {
        issues.push_back({ErrorKind::InvalidUtf8, row_no,
                          path.string() + ": invalid UTF-8 at byte " + std::to_string(*bad)});
        continue;
      }
      digest.update_field(doc.text);
    } else {
      doc.text = row[*text_idx];
    }
    if (trim(doc.text).empty()) {
      issues.push_back({ErrorKind::EmptyText, row_no, "document '" + doc.id + "' has no text"});
      continue;
    }

    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == *id_idx || c == *text_idx) continue;
      const auto& name = table.header[c];
      if (name == "answer" || name == "motivation") continue;
      doc.metadata.emplace_back(name, row[c]);
    }
    doc.token_estimate = chunker::estimate_tokens(doc.text);
    docs.push_back(std::move(doc));
  }
  if (!issues.empty()) throw IngestError(std::move(issues));
  return Corpus(std::move(docs), digest.hex_digest());
}

std::string to_normalized_csv(const Corpus& corpus) {
  const auto meta_cols = corpus.metadata_columns();
  std::string out;
  std::vector<std::string> header = {"id", "text"};
  header.insert(header.end(), meta_cols.begin(), meta_cols.end());
  csv::append_row(out, header);
  for (const auto& doc : corpus.documents()) {
    std::vector<std::string> row = {doc.id, doc.text};
    for (const auto& col : meta_cols) {
      auto it = std::find_if(doc.metadata.begin(), doc.metadata.end(),
                             [&](const auto& kv) { return kv.first == col; });
      row.push_back(it == doc.metadata.end() ? std::string() : it->second);
    }
    csv::append_row(out, row);
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > population) {
    throw Error(ErrorKind::SampleTooLarge, "sample size " + std::to_string(n) +
                                               " must be in [1, " + std::to_string(population) + "]");
  }
  SplitMix64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t i = 0; i < population && picked.size() < n; ++i) {
    const double remaining_needed = static_cast<double>(n - picked.size());
    const double remaining_pool = static_cast<double>(population - i);
    if (rng.next_unit() * remaining_pool < remaining_needed) picked.push_back(i);
  }
  return picked;
}

std::string export_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed,
                          const std::vector<std::string>& coder_ids) {
  const auto picked = sample_indices(corpus.size(), n, seed);
  std::vector<std::string> header = {"id", "text"};
  for (const auto& coder : coder_ids) {
    if (coder == "id" || coder == "text" || coder.empty() ||
        std::count(coder_ids.begin(), coder_ids.end(), coder) > 1) {
      throw Error(ErrorKind::InvalidData, "invalid or repeated coder id '" + coder + "'");
    }
    header.push_back(coder);
  }
  std::string out;
  csv::append_row(out, header);
  for (std::size_t i : picked) {
    const auto& doc = corpus.documents()[i];
    std::vector<std::string> row = {doc.id, doc.text};
    row.resize(header.size());
    csv::append_row(out, row);
  }
  return out;
}

void HumanCodes::validate_against(const Corpus& corpus) const {
  std::vector<IngestIssue> issues;
  for (std::size_t i = 0; i < entries.size() && issues.size() < kMaxReportedIssues; ++i) {
    if (!corpus.find(entries[i].document_id)) {
      issues.push_back({ErrorKind::UnknownDocument, 0,
                        "unknown document '" + entries[i].document_id + "'"});
    }
  }
  if (!issues.empty()) throw IngestError(std::move(issues));
}

std::vector<std::string> HumanCodes::coders() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.coder_id) == out.end()) out.push_back(e.coder_id);
  }
  return out;
}

HumanCodes parse_codes(std::string_view csv_text) {
  if (auto bad = find_invalid_utf8(csv_text)) {
    fail(ErrorKind::InvalidUtf8, 0, "invalid UTF-8 at byte " + std::to_string(*bad));
  }
  csv::Table table;
  try {
    table = csv::parse(csv_text);
  } catch (const Error& e) {
    fail(ErrorKind::MalformedCsv, 0, e.what());
  }

  // (row, document, coder, cell)
  struct Cell {
    std::size_t row;
    std::string document_id;
    std::string coder_id;
    std::string_view value;
  };
  std::vector<Cell> cells;

  const auto doc_idx = table.column("document_id");
  const auto coder_idx = table.column("coder_id");
  const auto value_idx = table.column("value");
  if (doc_idx || coder_idx || value_idx) {
    if (!doc_idx || !coder_idx || !value_idx) {
      fail(ErrorKind::MissingColumn, 0, "long layout needs document_id, coder_id and value columns");
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      cells.push_back({r + 1, std::string(trim(row[*doc_idx])), std::string(trim(row[*coder_idx])),
                       row[*value_idx]});
    }
  } else {
    const auto id_idx = table.column("id");
    if (!id_idx) fail(ErrorKind::MissingColumn, 0, "expected document_id,coder_id,value or id,<coders>");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == *id_idx || table.header[c] == "text") continue;
        cells.push_back({r + 1, std::string(trim(row[*id_idx])), table.header[c], row[c]});
      }
    }
  }

  HumanCodes codes;
  std::vector<IngestIssue> issues;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& cell : cells) {
    if (issues.size() >= kMaxReportedIssues) break;
    const auto text = trim(cell.value);
    if (text.empty()) continue;
    const auto value = parse_decimal(text);
    if (!value) {
      issues.push_back({ErrorKind::MalformedValue, cell.row,
                        "value '" + std::string(text) + "' is not a decimal number"});
      continue;
    }
    if (cell.document_id.empty() || cell.coder_id.empty()) {
      issues.push_back({ErrorKind::MalformedValue, cell.row, "empty document or coder id"});
      continue;
    }
    if (!seen.emplace(cell.document_id, cell.coder_id).second) {
      issues.push_back({ErrorKind::DuplicateId, cell.row,
                        "coder '" + cell.coder_id + "' coded '" + cell.document_id + "' twice"});
      continue;
    }
    codes.entries.push_back({cell.document_id, cell.coder_id, *value});
  }
  if (!issues.empty()) throw IngestError(std::move(issues));
  return codes;
}

HumanCodes import_codes(const std::filesystem::path& path) { return parse_codes(read_file(path)); }

}  // namespace corpuscoder::corpus
