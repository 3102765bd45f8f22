#include "cryptosynth/corpus/corpus.hpp"

#include <algorithm>
#include <stdexcept>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"

namespace cryptosynth::corpus {
namespace {

std::string guess_lang(std::string_view text) {
  std::size_t cjk = 0;
  std::size_t letters = 0;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_space(cp)) continue;
    ++letters;
    if (unicode::is_cjk(cp)) ++cjk;
  }
  if (letters == 0) return "und";
  return cjk * 10 >= letters * 3 ? "zh" : "en";
}

}  // namespace

std::string_view to_string(Source s) noexcept {
  return s == Source::Synthetic ? "synthetic" : "original";
}

void to_json(nlohmann::json& j, const Document& d) {
  j = nlohmann::json{{"doc_id", d.doc_id},     {"text", d.text},
                     {"lang", d.lang},         {"source", to_string(d.source)},
                     {"parent_ids", d.parent_ids}, {"meta", d.meta}};
}

void from_json(const nlohmann::json& j, Document& d) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  if (!j.contains("doc_id") || !j["doc_id"].is_string())
    throw std::invalid_argument("missing string field 'doc_id'");
  if (!j.contains("text") || !j["text"].is_string())
    throw std::invalid_argument("missing string field 'text'");
  d.doc_id = j["doc_id"].get<std::string>();
  if (d.doc_id.empty()) throw std::invalid_argument("empty doc_id");
  d.text = j["text"].get<std::string>();
  d.lang = j.value("lang", std::string("und"));
  const std::string source = j.value("source", std::string("original"));
  if (source == "original") {
    d.source = Source::Original;
  } else if (source == "synthetic") {
    d.source = Source::Synthetic;
  } else {
    throw std::invalid_argument("source must be 'original' or 'synthetic'");
  }
  d.parent_ids.clear();
  if (j.contains("parent_ids")) {
    for (const auto& p : j["parent_ids"]) {
      if (!p.is_string()) throw std::invalid_argument("parent_ids must be strings");
      d.parent_ids.push_back(p.get<std::string>());
    }
  }
  d.meta.clear();
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw std::invalid_argument("meta must be an object");
    for (const auto& [k, v] : j["meta"].items()) {
      if (!v.is_string()) throw std::invalid_argument("meta value for '" + k + "' must be a string");
      d.meta[k] = v.get<std::string>();
    }
  }
}

std::size_t approx_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_run = false;
  for (char32_t cp : unicode::decode(text)) {
    if (unicode::is_space(cp)) {
      in_run = false;
    } else if (unicode::is_cjk(cp)) {
      ++count;
      in_run = false;
    } else if (!in_run) {
      ++count;
      in_run = true;
    }
  }
  return count;
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  by_id_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const Document& d = documents_[i];
    if (d.source == Source::Synthetic && d.parent_ids.empty())
      throw std::invalid_argument("synthetic document '" + d.doc_id + "' has no parent_ids");
    if (d.source == Source::Original && !d.parent_ids.empty())
      throw std::invalid_argument("original document '" + d.doc_id + "' has parent_ids");
    if (!by_id_.emplace(d.doc_id, i).second) throw DuplicateDocId(d.doc_id);
    token_count_ += approx_tokens(d.text);
  }
}

const Document* Corpus::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

Corpus ingest(const std::filesystem::path& path, IngestKind kind) {
  std::vector<Document> docs;
  if (kind == IngestKind::PlainDir) {
    if (!std::filesystem::is_directory(path)) throw IoFailure(path.string(), "not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Document d;
      d.doc_id = f.stem().string();
      d.text = io::read_file(f);
      if (!unicode::is_valid_utf8(d.text)) throw IoFailure(f.string(), "not valid UTF-8");
      d.lang = guess_lang(d.text);
      docs.push_back(std::move(d));
    }
  } else {
    const std::string text = io::read_file(path);
    const auto lines = io::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string& line = lines[i];
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const std::size_t line_no = i + 1;
      if (!unicode::is_valid_utf8(line)) throw MalformedRecord(line_no, "not valid UTF-8");
      Document d;
      try {
        from_json(nlohmann::json::parse(line), d);
      } catch (const nlohmann::json::exception& e) {
        throw MalformedRecord(line_no, e.what());
      } catch (const std::invalid_argument& e) {
        throw MalformedRecord(line_no, e.what());
      }
      if ((d.source == Source::Synthetic) == d.parent_ids.empty())
        throw MalformedRecord(line_no, "parent_ids must be non-empty exactly for synthetic documents");
      docs.push_back(std::move(d));
    }
  }
  return Corpus(std::move(docs));
}

void persist(const Corpus& corpus, const std::filesystem::path& path) {
  std::vector<nlohmann::json> records;
  records.reserve(corpus.size());
  for (const auto& d : corpus.documents()) records.emplace_back(d);
  io::write_jsonl(path, records);
}

}  // namespace cryptosynth::corpus
