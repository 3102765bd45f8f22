#include "cryptosynth/pii/merge.hpp"

#include <algorithm>
#include <tuple>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cryptosynth::pii {

int detector_rank(const EntitySpan& s) noexcept {
  switch (s.detector) {
    case Detector::Manual: return 0;
    case Detector::Regex: return is_structured(s.entity_type) ? 1 : 4;
    case Detector::NerSidecar: return 2;
    case Detector::Llm: return 3;
  }
  return 5;
}

std::vector<EntitySpan> merge_spans(const std::vector<EntitySpan>& spans) {
  if (spans.empty()) return {};
  for (const auto& s : spans) {
    if (s.doc_id != spans.front().doc_id) {
      throw MixedDocuments("merge_spans got spans for '" + spans.front().doc_id + "' and '" + s.doc_id + "'");
    }
  }
  std::vector<const EntitySpan*> order;
  order.reserve(spans.size());
  for (const auto& s : spans) order.push_back(&s);
  auto key = [](const EntitySpan* s) {
    return std::tuple(detector_rank(*s), -static_cast<long long>(s->length()), s->start, -s->confidence,
                      s->entity_type, s->detector, s->surface);
  };
  std::stable_sort(order.begin(), order.end(), [&](auto* a, auto* b) { return key(a) < key(b); });

  std::vector<EntitySpan> kept;
  for (const auto* s : order) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](const EntitySpan& k) { return k.overlaps(*s); });
    if (!clash) kept.push_back(*s);
  }
  std::sort(kept.begin(), kept.end(), [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  return kept;
}

void validate_spans(const corpus::Corpus& corpus, const SpanMap& spans) {
  for (const auto& [doc_id, list] : spans) {
    const auto* doc = corpus.find(doc_id);
    if (doc == nullptr) throw InvalidSpan("spans reference unknown doc_id '" + doc_id + "'");
    for (const auto& s : list) {
      if (s.doc_id != doc_id || !span_matches_text(s, doc->text)) {
        throw InvalidSpan("span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") '" + s.surface +
                          "' does not match document '" + doc_id + "'");
      }
    }
  }
}

void write_spans(const std::filesystem::path& path, const corpus::Corpus& corpus, const SpanMap& spans) {
  std::vector<nlohmann::json> records;
  for (const auto& doc : corpus.documents()) {
    auto it = spans.find(doc.doc_id);
    if (it == spans.end()) continue;
    for (const auto& s : it->second) records.emplace_back(s);
  }
  io::write_jsonl(path, records);
}

SpanMap read_spans(const std::filesystem::path& path) {
  SpanMap out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      auto s = nlohmann::json::parse(line).get<EntitySpan>();
      out[s.doc_id].push_back(std::move(s));
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

void export_review(const corpus::Corpus& corpus, const SpanMap& spans, const std::filesystem::path& path) {
  validate_spans(corpus, spans);
  std::vector<nlohmann::json> records;
  std::size_t total = 0;
  for (const auto& [_, list] : spans) total += list.size();
  records.push_back({{"kind", "header"},
                     {"spans", total},
                     {"verdicts", {"keep", "drop", "retype:<TYPE>"}},
                     {"note", "fill \"verdict\" per span; empty means keep"}});
  for (const auto& doc : corpus.documents()) {
    auto it = spans.find(doc.doc_id);
    if (it == spans.end()) continue;
    for (const auto& s : it->second) {
      nlohmann::json rec = s;
      rec["kind"] = "span";
      rec["verdict"] = "";
      records.push_back(std::move(rec));
    }
  }
  io::write_jsonl(path, records);
}

SpanMap import_review(const std::filesystem::path& path, const corpus::Corpus& corpus) {
  SpanMap out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedReview(line_no, e.what());
    }
    if (rec.value("kind", "span") == "header") continue;
    EntitySpan span;
    try {
      span = rec.get<EntitySpan>();
    } catch (const std::exception& e) {
      throw MalformedReview(line_no, e.what());
    }
    const std::string verdict = unicode::trim(rec.value("verdict", ""));
    if (verdict == "drop") continue;
    if (verdict.rfind("retype:", 0) == 0) {
      const auto t = parse_entity_type(verdict.substr(7));
      if (!t) throw MalformedReview(line_no, "unknown type in verdict '" + verdict + "'");
      span.entity_type = *t;
    } else if (!verdict.empty() && verdict != "keep") {
      throw MalformedReview(line_no, "unknown verdict '" + verdict + "'");
    }
    const auto* doc = corpus.find(span.doc_id);
    if (doc == nullptr || !span_matches_text(span, doc->text)) {
      throw MalformedReview(line_no, "span no longer matches document '" + span.doc_id + "'");
    }
    span.detector = Detector::Manual;
    span.confidence = 1.0;
    out[span.doc_id].push_back(std::move(span));
  }
  for (auto& [_, list] : out) {
    std::stable_sort(list.begin(), list.end(), [](const EntitySpan& a, const EntitySpan& b) {
      return std::tuple(a.start, a.end) < std::tuple(b.start, b.end);
    });
  }
  return out;
}

}  // namespace cryptosynth::pii
