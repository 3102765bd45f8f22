#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/error.hpp"

namespace cryptosynth::corpus {

enum class Source { Original, Synthetic };

std::string_view to_string(Source s) noexcept;

struct Document {
  std::string doc_id;
  std::string text;
  std::string lang = "und";
  Source source = Source::Original;
  std::vector<std::string> parent_ids;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Document&, const Document&) = default;
};

void to_json(nlohmann::json& j, const Document& d);
// Throws std::invalid_argument with a field-specific message.
void from_json(const nlohmann::json& j, Document& d);

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line_no, const std::string& detail)
      : Error("MalformedRecord", "line " + std::to_string(line_no) + ": " + detail),
        line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateDocId : public Error {
 public:
  explicit DuplicateDocId(std::string id)
      : Error("DuplicateDocId", "duplicate doc_id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// Whitespace-delimited units for non-CJK text, one per CJK codepoint.
std::size_t approx_tokens(std::string_view text);

// An ordered, immutable set of documents with unique ids.
class Corpus {
 public:
  Corpus() = default;
  // Throws DuplicateDocId, or std::invalid_argument when a document breaks the
  // original/synthetic parent invariant.
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const noexcept { return documents_; }
  std::size_t size() const noexcept { return documents_.size(); }
  bool empty() const noexcept { return documents_.empty(); }
  std::size_t token_count() const noexcept { return token_count_; }

  // nullptr when absent.
  const Document* find(std::string_view doc_id) const;

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.documents_ == b.documents_; }

 private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t token_count_ = 0;
};

enum class IngestKind { Jsonl, PlainDir };

Corpus ingest(const std::filesystem::path& path, IngestKind kind = IngestKind::Jsonl);
void persist(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace cryptosynth::corpus
