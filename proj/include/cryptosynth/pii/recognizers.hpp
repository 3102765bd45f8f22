#pragma once

#include <filesystem>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/corpus/corpus.hpp"

namespace cryptosynth::pii {

class InvalidRecognizer : public Error {
 public:
  explicit InvalidRecognizer(const std::string& detail) : Error("InvalidRecognizer", detail) {}
};

// Post-match checks run on the digits of a match.
enum class Validator { None, Luhn, CnId };

std::string_view to_string(Validator v) noexcept;

// Luhn mod-10 over the ASCII digits of `s`; other characters are skipped.
// Requires 13..19 digits.
bool luhn_valid(std::string_view s);

// 18-character resident ID: ISO 7064 MOD 11-2 check character.
bool cn_id_valid(std::string_view s);

struct Recognizer {
  std::string name;
  EntityType entity_type = EntityType::Other;
  // ECMAScript syntax, matched against UTF-8 bytes: a bracket class sees
  // bytes, so multi-byte alternatives must be written as (?:a|b).
  std::string pattern;
  Validator validator = Validator::None;
  std::regex compiled;
};

class RecognizerSet {
 public:
  // Throws InvalidRecognizer when the pattern does not compile.
  void add(std::string name, EntityType type, std::string pattern, Validator validator = Validator::None);

  const std::vector<Recognizer>& recognizers() const noexcept { return recognizers_; }
  bool empty() const noexcept { return recognizers_.empty(); }

  // Phone, ID number, bank card and date patterns.
  static RecognizerSet defaults();

  // [{"name", "type", "pattern", "validator"}]; validator is optional.
  static RecognizerSet from_json(const nlohmann::json& j);
  static RecognizerSet load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  std::vector<Recognizer> recognizers_;
};

// All matches of every recognizer, sorted by (start, end, type). Matches
// glued to an ASCII letter or digit on either side are discarded.
std::vector<EntitySpan> detect_regex(const corpus::Document& doc, const RecognizerSet& recognizers);

}  // namespace cryptosynth::pii
