#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/pii/merge.hpp"
#include "cryptosynth/pii/recognizers.hpp"

namespace cryptosynth::audit {

class MissingArticleKey : public Error {
 public:
  MissingArticleKey(const std::string& doc_id, const std::string& key)
      : Error("MissingArticleKey", "document '" + doc_id + "' has no '" + key + "' and no parent_ids") {}
};

struct InventoryEntry {
  std::string surface;  // canonicalized
  EntityType entity_type = EntityType::Other;
  std::string source_doc_id;

  friend auto operator<=>(const InventoryEntry&, const InventoryEntry&) = default;
};

// Known plaintext PII of the source corpus. Surfaces are canonicalized with
// the same rules as detcrypt; duplicates and empty surfaces are dropped.
class PlaintextInventory {
 public:
  PlaintextInventory() = default;
  explicit PlaintextInventory(std::vector<InventoryEntry> entries, detcrypt::CanonicalOptions canonical = {});

  static PlaintextInventory from_spans(const pii::SpanMap& spans, detcrypt::CanonicalOptions canonical = {});

  const std::vector<InventoryEntry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }
  const detcrypt::CanonicalOptions& canonical() const noexcept { return canonical_; }

  // Entries per type.
  std::map<EntityType, std::size_t> per_type_counts() const;

  // Distinct surfaces with the type most entries agree on (ties: lowest type).
  const std::map<std::string, EntityType>& surfaces() const noexcept { return surfaces_; }

  // JSONL of {"surface", "type", "source_doc_id"}.
  void save(const std::filesystem::path& path) const;
  static PlaintextInventory load(const std::filesystem::path& path, detcrypt::CanonicalOptions canonical = {});

 private:
  std::vector<InventoryEntry> entries_;
  std::map<std::string, EntityType> surfaces_;
  detcrypt::CanonicalOptions canonical_;
};

// Longest-match, non-overlapping occurrences of `surfaces` in `text`.
// Both sides must already be canonical. Returns (surface, byte offset) pairs.
std::vector<std::pair<std::string, std::size_t>> find_surfaces(std::string_view text,
                                                                const std::map<std::string, EntityType>& surfaces);

// Types of the inventory surfaces found in `text` outside cipher tokens.
std::vector<EntityType> plaintext_hits(std::string_view text, const PlaintextInventory& inventory);

struct LeakageCounts {
  std::size_t unencrypted = 0;
  std::size_t encrypted = 0;

  // unencrypted / encrypted; nullopt when nothing was encrypted.
  std::optional<double> ratio() const;
  // "1:300", "0:900", "undefined", or "1:42.5" when not integral.
  std::string label() const;

  LeakageCounts& operator+=(const LeakageCounts& o) {
    unencrypted += o.unencrypted;
    encrypted += o.encrypted;
    return *this;
  }
  friend bool operator==(const LeakageCounts&, const LeakageCounts&) = default;
};

struct DocumentLeakage {
  std::string doc_id;
  LeakageCounts counts;

  friend bool operator==(const DocumentLeakage&, const DocumentLeakage&) = default;
};

struct LeakageReport {
  std::map<EntityType, LeakageCounts> per_type;
  LeakageCounts total;
  std::vector<DocumentLeakage> per_document;  // corpus order
  // Recognizer hits outside tokens, only filled when a recheck set is given.
  std::optional<std::map<EntityType, std::size_t>> structured_recheck;

  friend bool operator==(const LeakageReport&, const LeakageReport&) = default;
};

struct LeakageOptions {
  const pii::RecognizerSet* recheck = nullptr;
  std::size_t workers = 1;
};

// Encrypted counts are grammar-matched tokens by prefix type; unencrypted
// counts are inventory surface occurrences outside every token.
// Throws std::invalid_argument on an empty inventory.
LeakageReport leakage_report(const corpus::Corpus& synthetic, const PlaintextInventory& inventory,
                             const LeakageOptions& options = {});

// Article id -> payloads of the well-formed tokens in its documents.
struct CipherInventory {
  std::map<std::string, std::set<std::string>> by_article;

  bool contains(const std::string& article_id, const std::string& payload) const;
  // Articles other than `article_id` that hold `payload`.
  bool held_elsewhere(const std::string& article_id, const std::string& payload) const;

  friend bool operator==(const CipherInventory&, const CipherInventory&) = default;
};

// Groups by meta[group_key]; "doc_id" groups by the document itself; otherwise
// a document without the key falls back to its parent_ids.
CipherInventory build_cipher_inventory(const corpus::Corpus& synthetic, const std::string& group_key);

struct ResponseRecord {
  std::string article_id;
  std::string text;
};

// JSONL with `group_key` and "text" fields.
std::vector<ResponseRecord> read_responses(const std::filesystem::path& path, const std::string& group_key);

enum class Citation { Correct, Fcaoa, Fcnd };
enum class FcndCause { Base64Format, Pkcs7Padding, NotInInventory };

std::string_view to_string(Citation c) noexcept;
std::string_view to_string(FcndCause c) noexcept;

struct TokenVerdict {
  std::size_t response = 0;
  std::string article_id;
  std::string rendering;
  Citation citation = Citation::Correct;
  std::optional<FcndCause> cause;
  bool repaired = false;

  friend bool operator==(const TokenVerdict&, const TokenVerdict&) = default;
};

struct FailureCounts {
  std::size_t fcaoa = 0;
  std::size_t fcnd = 0;
  std::size_t base64_format = 0;
  std::size_t pkcs7_padding = 0;
  std::size_t not_in_inventory = 0;

  std::size_t failures() const noexcept { return fcaoa + fcnd; }
  friend bool operator==(const FailureCounts&, const FailureCounts&) = default;
};

struct HallucinationReport {
  std::size_t unique_ciphers = 0;  // distinct (article_id, payload)
  std::size_t total_ciphers = 0;
  FailureCounts unique;
  FailureCounts total;
  std::size_t repaired = 0;  // own-article citations recovered by '=' repair
  std::vector<TokenVerdict> verdicts;

  std::size_t unique_failures() const noexcept { return unique.failures(); }
  std::size_t total_failures() const noexcept { return total.failures(); }
  double unique_ratio() const noexcept;
  double total_ratio() const noexcept;

  friend bool operator==(const HallucinationReport&, const HallucinationReport&) = default;
};

// Classifies every grammar-matched token of every response: own-article payload
// is correct; another article's decryptable payload is FCAOA; everything else
// is FCND with the decrypt failure as sub-cause.
HallucinationReport hallucination_report(const std::vector<ResponseRecord>& responses,
                                         const CipherInventory& inventory, const detcrypt::EntityCipher& cipher);

void to_json(nlohmann::json& j, const LeakageReport& r);
void from_json(const nlohmann::json& j, LeakageReport& r);
void to_json(nlohmann::json& j, const HallucinationReport& r);
void from_json(const nlohmann::json& j, HallucinationReport& r);

}  // namespace cryptosynth::audit
