#include "cryptosynth/audit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/parallel.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/base64.hpp"
#include "cryptosynth/detcrypt/token.hpp"

namespace cryptosynth::audit {

namespace {

EntityType type_from(const nlohmann::json& j) {
  const auto t = parse_entity_type(j.get<std::string>());
  if (!t) throw std::invalid_argument("unknown entity type '" + j.get<std::string>() + "'");
  return *t;
}

std::string canonical_text(std::string_view text, const detcrypt::CanonicalOptions& opts) {
  std::string out = unicode::nfc(text);
  return opts.casefold ? unicode::casefold(out) : out;
}

std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  return 4;
}

// Byte ranges of `text` not covered by any grammar-matched token.
std::vector<std::string_view> outside_tokens(std::string_view text, const std::vector<detcrypt::ParsedToken>& tokens) {
  std::vector<std::string_view> out;
  std::size_t at = 0;
  for (const auto& t : tokens) {
    if (t.byte_start > at) out.push_back(text.substr(at, t.byte_start - at));
    at = t.byte_end;
  }
  if (at < text.size()) out.push_back(text.substr(at));
  return out;
}

}  // namespace

PlaintextInventory::PlaintextInventory(std::vector<InventoryEntry> entries, detcrypt::CanonicalOptions canonical)
    : canonical_(canonical) {
  for (auto& e : entries) {
    e.surface = detcrypt::canonicalize(e.surface, canonical_);
    if (!e.surface.empty()) entries_.push_back(std::move(e));
  }
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());

  std::map<std::string, std::map<EntityType, std::size_t>> votes;
  for (const auto& e : entries_) ++votes[e.surface][e.entity_type];
  for (const auto& [surface, by_type] : votes) {
    auto best = by_type.begin();
    for (auto it = by_type.begin(); it != by_type.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    surfaces_.emplace(surface, best->first);
  }
}

PlaintextInventory PlaintextInventory::from_spans(const pii::SpanMap& spans, detcrypt::CanonicalOptions canonical) {
  std::vector<InventoryEntry> entries;
  for (const auto& [doc_id, list] : spans) {
    for (const auto& s : list) entries.push_back({s.surface, s.entity_type, doc_id});
  }
  return PlaintextInventory(std::move(entries), canonical);
}

std::map<EntityType, std::size_t> PlaintextInventory::per_type_counts() const {
  std::map<EntityType, std::size_t> out;
  for (const auto& e : entries_) ++out[e.entity_type];
  return out;
}

void PlaintextInventory::save(const std::filesystem::path& path) const {
  std::vector<nlohmann::json> records;
  for (const auto& e : entries_) {
    records.push_back({{"surface", e.surface}, {"type", to_string(e.entity_type)}, {"source_doc_id", e.source_doc_id}});
  }
  io::write_jsonl(path, records);
}

PlaintextInventory PlaintextInventory::load(const std::filesystem::path& path, detcrypt::CanonicalOptions canonical) {
  std::vector<InventoryEntry> entries;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("surface").get<std::string>(), type_from(j.at("type")),
                         j.value("source_doc_id", std::string{})});
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return PlaintextInventory(std::move(entries), canonical);
}

std::vector<std::pair<std::string, std::size_t>> find_surfaces(std::string_view text,
                                                                const std::map<std::string, EntityType>& surfaces) {
  // Candidates keyed by their first codepoint, longest first.
  std::unordered_map<std::string_view, std::vector<std::string_view>> by_head;
  for (const auto& [s, _] : surfaces) {
    by_head[std::string_view(s).substr(0, utf8_len(static_cast<unsigned char>(s[0])))].push_back(s);
  }
  for (auto& [_, list] : by_head) {
    std::sort(list.begin(), list.end(), [](auto a, auto b) { return a.size() != b.size() ? a.size() > b.size() : a < b; });
  }
  std::vector<std::pair<std::string, std::size_t>> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t step = std::min(utf8_len(static_cast<unsigned char>(text[i])), text.size() - i);
    const auto it = by_head.find(text.substr(i, step));
    std::size_t advance = step;
    if (it != by_head.end()) {
      for (auto s : it->second) {
        if (text.compare(i, s.size(), s) == 0) {
          out.emplace_back(std::string(s), i);
          advance = s.size();
          break;
        }
      }
    }
    i += advance;
  }
  return out;
}

std::vector<EntityType> plaintext_hits(std::string_view text, const PlaintextInventory& inventory) {
  std::vector<EntityType> out;
  for (auto segment : outside_tokens(text, detcrypt::parse_cipher_tokens(text))) {
    for (const auto& [surface, _] : find_surfaces(canonical_text(segment, inventory.canonical()), inventory.surfaces())) {
      out.push_back(inventory.surfaces().at(surface));
    }
  }
  return out;
}

std::optional<double> LeakageCounts::ratio() const {
  if (encrypted == 0) return std::nullopt;
  return static_cast<double>(unencrypted) / static_cast<double>(encrypted);
}

std::string LeakageCounts::label() const {
  if (encrypted == 0) return "undefined";
  if (unencrypted == 0) return "0:" + std::to_string(encrypted);
  if (encrypted % unencrypted == 0) return "1:" + std::to_string(encrypted / unencrypted);
  std::ostringstream os;
  os.precision(1);
  os << std::fixed << "1:" << static_cast<double>(encrypted) / static_cast<double>(unencrypted);
  return os.str();
}

LeakageReport leakage_report(const corpus::Corpus& synthetic, const PlaintextInventory& inventory,
                             const LeakageOptions& options) {
  if (inventory.empty()) throw std::invalid_argument("leakage_report needs a non-empty inventory");
  const auto& docs = synthetic.documents();

  struct PerDoc {
    std::map<EntityType, LeakageCounts> per_type;
    std::map<EntityType, std::size_t> recheck;
  };
  std::vector<PerDoc> results(docs.size());
  parallel_for(docs.size(), options.workers, [&](std::size_t i) {
    const auto& doc = docs[i];
    auto& r = results[i];
    const auto tokens = detcrypt::parse_cipher_tokens(doc.text);
    for (const auto& t : tokens) ++r.per_type[t.token.entity_type].encrypted;
    for (const auto type : plaintext_hits(doc.text, inventory)) ++r.per_type[type].unencrypted;
    if (options.recheck != nullptr) {
      corpus::Document view = doc;
      view.text.clear();
      for (auto segment : outside_tokens(doc.text, tokens)) {
        view.text.append(segment);
        view.text.push_back(' ');
      }
      for (const auto& s : pii::detect_regex(view, *options.recheck)) ++r.recheck[s.entity_type];
    }
  });

  LeakageReport report;
  if (options.recheck != nullptr) report.structured_recheck.emplace();
  for (const auto& [type, _] : inventory.per_type_counts()) report.per_type[type];
  for (std::size_t i = 0; i < docs.size(); ++i) {
    DocumentLeakage d{docs[i].doc_id, {}};
    for (const auto& [type, c] : results[i].per_type) {
      report.per_type[type] += c;
      d.counts += c;
    }
    report.total += d.counts;
    report.per_document.push_back(std::move(d));
    if (report.structured_recheck) {
      for (const auto& [type, n] : results[i].recheck) (*report.structured_recheck)[type] += n;
    }
  }
  return report;
}

bool CipherInventory::contains(const std::string& article_id, const std::string& payload) const {
  const auto it = by_article.find(article_id);
  return it != by_article.end() && it->second.count(payload) > 0;
}

bool CipherInventory::held_elsewhere(const std::string& article_id, const std::string& payload) const {
  for (const auto& [id, payloads] : by_article) {
    if (id != article_id && payloads.count(payload) > 0) return true;
  }
  return false;
}

CipherInventory build_cipher_inventory(const corpus::Corpus& synthetic, const std::string& group_key) {
  CipherInventory inv;
  for (const auto& doc : synthetic.documents()) {
    std::vector<std::string> keys;
    if (auto it = doc.meta.find(group_key); it != doc.meta.end()) {
      keys.push_back(it->second);
    } else if (group_key == "doc_id") {
      keys.push_back(doc.doc_id);
    } else if (!doc.parent_ids.empty()) {
      keys = doc.parent_ids;
    } else {
      throw MissingArticleKey(doc.doc_id, group_key);
    }
    for (const auto& t : detcrypt::parse_cipher_tokens(doc.text)) {
      if (!t.valid) continue;
      for (const auto& k : keys) inv.by_article[k].insert(t.token.payload_b64);
    }
  }
  return inv;
}

std::vector<ResponseRecord> read_responses(const std::filesystem::path& path, const std::string& group_key) {
  std::vector<ResponseRecord> out;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(io::read_file(path))) {
    ++line_no;
    if (unicode::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at(group_key).get<std::string>(), j.at("text").get<std::string>()});
    } catch (const std::exception& e) {
      throw corpus::MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

std::string_view to_string(Citation c) noexcept {
  switch (c) {
    case Citation::Correct: return "correct";
    case Citation::Fcaoa: return "FCAOA";
    case Citation::Fcnd: return "FCND";
  }
  return "?";
}

std::string_view to_string(FcndCause c) noexcept {
  switch (c) {
    case FcndCause::Base64Format: return "base64_format";
    case FcndCause::Pkcs7Padding: return "pkcs7_padding";
    case FcndCause::NotInInventory: return "not_in_inventory";
  }
  return "?";
}

double HallucinationReport::unique_ratio() const noexcept {
  return unique_ciphers == 0 ? 0.0 : static_cast<double>(unique_failures()) / static_cast<double>(unique_ciphers);
}

double HallucinationReport::total_ratio() const noexcept {
  return total_ciphers == 0 ? 0.0 : static_cast<double>(total_failures()) / static_cast<double>(total_ciphers);
}

namespace {

TokenVerdict classify(const std::string& article_id, const detcrypt::CipherToken& token,
                      const CipherInventory& inventory, const detcrypt::EntityCipher& cipher) {
  TokenVerdict v;
  v.article_id = article_id;
  v.rendering = token.rendering();
  const auto& payload = token.payload_b64;
  if (inventory.contains(article_id, payload)) return v;

  const auto outcome = cipher.decrypt(token);
  if (outcome.ok() && inventory.held_elsewhere(article_id, payload)) {
    v.citation = Citation::Fcaoa;
    return v;
  }
  if (outcome.status == detcrypt::DecryptStatus::OkRepairedBase64) {
    const std::string fixed = detcrypt::repair_base64(payload).value;
    if (inventory.contains(article_id, fixed)) {
      v.repaired = true;
      return v;
    }
    if (inventory.held_elsewhere(article_id, fixed)) {
      v.citation = Citation::Fcaoa;
      v.repaired = true;
      return v;
    }
  }
  v.citation = Citation::Fcnd;
  switch (outcome.status) {
    case detcrypt::DecryptStatus::FailBase64: v.cause = FcndCause::Base64Format; break;
    case detcrypt::DecryptStatus::FailPadding: v.cause = FcndCause::Pkcs7Padding; break;
    default: v.cause = FcndCause::NotInInventory; break;
  }
  return v;
}

void tally(FailureCounts& c, const TokenVerdict& v) {
  if (v.citation == Citation::Fcaoa) ++c.fcaoa;
  if (v.citation != Citation::Fcnd) return;
  ++c.fcnd;
  switch (*v.cause) {
    case FcndCause::Base64Format: ++c.base64_format; break;
    case FcndCause::Pkcs7Padding: ++c.pkcs7_padding; break;
    case FcndCause::NotInInventory: ++c.not_in_inventory; break;
  }
}

}  // namespace

HallucinationReport hallucination_report(const std::vector<ResponseRecord>& responses,
                                         const CipherInventory& inventory, const detcrypt::EntityCipher& cipher) {
  HallucinationReport r;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& resp = responses[i];
    for (const auto& parsed : detcrypt::parse_cipher_tokens(resp.text)) {
      auto v = classify(resp.article_id, parsed.token, inventory, cipher);
      v.response = i;
      ++r.total_ciphers;
      tally(r.total, v);
      if (v.repaired && v.citation == Citation::Correct) ++r.repaired;
      if (seen.emplace(resp.article_id, parsed.token.payload_b64).second) {
        ++r.unique_ciphers;
        tally(r.unique, v);
      }
      r.verdicts.push_back(std::move(v));
    }
  }
  return r;
}

namespace {

nlohmann::json counts_json(const LeakageCounts& c) {
  nlohmann::json j = {{"unencrypted", c.unencrypted}, {"encrypted", c.encrypted}, {"label", c.label()}};
  const auto r = c.ratio();
  j["ratio"] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
  return j;
}

LeakageCounts counts_from(const nlohmann::json& j) {
  return {j.at("unencrypted").get<std::size_t>(), j.at("encrypted").get<std::size_t>()};
}

nlohmann::json failures_json(const FailureCounts& c) {
  return {{"FCAOA", c.fcaoa},
          {"FCND", c.fcnd},
          {"fcnd_causes",
           {{"base64_format", c.base64_format}, {"pkcs7_padding", c.pkcs7_padding}, {"not_in_inventory", c.not_in_inventory}}}};
}

FailureCounts failures_from(const nlohmann::json& j) {
  const auto& causes = j.at("fcnd_causes");
  return {j.at("FCAOA").get<std::size_t>(), j.at("FCND").get<std::size_t>(),
          causes.at("base64_format").get<std::size_t>(), causes.at("pkcs7_padding").get<std::size_t>(),
          causes.at("not_in_inventory").get<std::size_t>()};
}

}  // namespace

void to_json(nlohmann::json& j, const LeakageReport& r) {
  j = nlohmann::json::object();
  auto& per_type = j["per_type"] = nlohmann::json::object();
  for (const auto& [type, c] : r.per_type) per_type[std::string(to_string(type))] = counts_json(c);
  j["total"] = counts_json(r.total);
  auto& docs = j["per_document"] = nlohmann::json::array();
  for (const auto& d : r.per_document) {
    auto rec = counts_json(d.counts);
    rec["doc_id"] = d.doc_id;
    docs.push_back(std::move(rec));
  }
  if (r.structured_recheck) {
    auto& s = j["structured_recheck"] = nlohmann::json::object();
    for (const auto& [type, n] : *r.structured_recheck) s[std::string(to_string(type))] = n;
  } else {
    j["structured_recheck"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, LeakageReport& r) {
  r = {};
  for (const auto& [name, c] : j.at("per_type").items()) r.per_type[type_from(nlohmann::json(name))] = counts_from(c);
  r.total = counts_from(j.at("total"));
  for (const auto& d : j.at("per_document")) r.per_document.push_back({d.at("doc_id").get<std::string>(), counts_from(d)});
  if (j.contains("structured_recheck") && !j["structured_recheck"].is_null()) {
    r.structured_recheck.emplace();
    for (const auto& [name, n] : j["structured_recheck"].items()) {
      (*r.structured_recheck)[type_from(nlohmann::json(name))] = n.get<std::size_t>();
    }
  }
}

void to_json(nlohmann::json& j, const HallucinationReport& r) {
  j = {{"unique_ciphers", r.unique_ciphers},
       {"unique_failures", r.unique_failures()},
       {"unique_ratio", r.unique_ratio()},
       {"total_ciphers", r.total_ciphers},
       {"total_failures", r.total_failures()},
       {"total_ratio", r.total_ratio()},
       {"unique", failures_json(r.unique)},
       {"total", failures_json(r.total)},
       {"repaired", r.repaired}};
  auto& verdicts = j["verdicts"] = nlohmann::json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"response", v.response},
                        {"article_id", v.article_id},
                        {"rendering", v.rendering},
                        {"class", to_string(v.citation)},
                        {"cause", v.cause ? nlohmann::json(to_string(*v.cause)) : nlohmann::json(nullptr)},
                        {"repaired", v.repaired}});
  }
}

void from_json(const nlohmann::json& j, HallucinationReport& r) {
  r = {};
  r.unique_ciphers = j.at("unique_ciphers").get<std::size_t>();
  r.total_ciphers = j.at("total_ciphers").get<std::size_t>();
  r.unique = failures_from(j.at("unique"));
  r.total = failures_from(j.at("total"));
  r.repaired = j.at("repaired").get<std::size_t>();
  for (const auto& v : j.at("verdicts")) {
    TokenVerdict t;
    t.response = v.at("response").get<std::size_t>();
    t.article_id = v.at("article_id").get<std::string>();
    t.rendering = v.at("rendering").get<std::string>();
    const auto cls = v.at("class").get<std::string>();
    t.citation = cls == "FCAOA" ? Citation::Fcaoa : cls == "FCND" ? Citation::Fcnd : Citation::Correct;
    if (!v.at("cause").is_null()) {
      const auto cause = v["cause"].get<std::string>();
      t.cause = cause == "base64_format"   ? FcndCause::Base64Format
                : cause == "pkcs7_padding" ? FcndCause::Pkcs7Padding
                                           : FcndCause::NotInInventory;
    }
    t.repaired = v.at("repaired").get<bool>();
    r.verdicts.push_back(std::move(t));
  }
}

}  // namespace cryptosynth::audit
