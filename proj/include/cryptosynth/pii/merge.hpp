#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/corpus/corpus.hpp"

namespace cryptosynth::pii {

class MixedDocuments : public Error {
 public:
  explicit MixedDocuments(const std::string& detail) : Error("MixedDocuments", detail) {}
};

class MalformedReview : public Error {
 public:
  MalformedReview(std::size_t line_no, const std::string& detail)
      : Error("MalformedReview", "review line " + std::to_string(line_no) + ": " + detail), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

// Detected spans keyed by doc_id.
using SpanMap = std::map<std::string, std::vector<EntitySpan>>;

// Lower rank wins an overlap: manual, structured regex, ner_sidecar, llm,
// then any other regex hit.
int detector_rank(const EntitySpan& s) noexcept;

// Greedy non-overlapping selection by (rank, longer, earlier start, higher
// confidence, type order); result sorted by start.
std::vector<EntitySpan> merge_spans(const std::vector<EntitySpan>& spans);

// Throws InvalidSpan on the first span that does not fit its document.
void validate_spans(const corpus::Corpus& corpus, const SpanMap& spans);

// spans.jsonl: one EntitySpan per line, documents in corpus order.
void write_spans(const std::filesystem::path& path, const corpus::Corpus& corpus, const SpanMap& spans);
SpanMap read_spans(const std::filesystem::path& path);

// JSONL: a header record, then one record per span with an empty "verdict".
void export_review(const corpus::Corpus& corpus, const SpanMap& spans, const std::filesystem::path& path);

// Applies verdicts: "" or "keep" keeps, "drop" removes, "retype:<TYPE>"
// changes the type. Surviving spans become detector=manual, confidence 1.
SpanMap import_review(const std::filesystem::path& path, const corpus::Corpus& corpus);

}  // namespace cryptosynth::pii
