#include "cryptosynth/detcrypt/token.hpp"

#include <array>
#include <utility>

#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/base64.hpp"

namespace cryptosynth::detcrypt {
namespace {

constexpr std::array<std::pair<EntityType, std::string_view>, 8> kPrefixes{{
    {EntityType::Person, "Person"},
    {EntityType::Location, "Location"},
    {EntityType::Phone, "Phone"},
    {EntityType::IdNumber, "ID"},
    {EntityType::BankCard, "Card"},
    {EntityType::Date, "Date"},
    {EntityType::Org, "Org"},
    {EntityType::Other, "Ent"},
}};

bool payload_char(char c) noexcept { return is_base64_char(c) || c == '='; }

}  // namespace

std::string_view prefix_for(EntityType t) noexcept {
  for (const auto& [type, prefix] : kPrefixes) {
    if (type == t) return prefix;
  }
  return "Ent";
}

std::optional<EntityType> type_for_prefix(std::string_view prefix) noexcept {
  for (const auto& [type, p] : kPrefixes) {
    if (p == prefix) return type;
  }
  return std::nullopt;
}

std::string CipherToken::rendering() const {
  std::string out(prefix_for(entity_type));
  out += "_[";
  out += payload_b64;
  out += ']';
  return out;
}

bool CipherToken::well_formed() const {
  const auto bytes = base64_decode(payload_b64);
  return bytes && !bytes->empty() && bytes->size() % 16 == 0;
}

std::string render(const CipherToken& token) { return token.rendering(); }

std::optional<CipherToken> parse_rendering(std::string_view text) {
  auto tokens = parse_cipher_tokens(text);
  if (tokens.size() != 1 || tokens[0].byte_start != 0 || tokens[0].byte_end != text.size())
    return std::nullopt;
  return std::move(tokens[0].token);
}

std::vector<ParsedToken> parse_cipher_tokens(std::string_view text) {
  std::vector<ParsedToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    for (const auto& [type, prefix] : kPrefixes) {
      if (text.compare(i, prefix.size(), prefix) != 0) continue;
      std::size_t p = i + prefix.size();
      if (text.compare(p, 2, "_[") != 0) continue;
      p += 2;
      const std::size_t payload_begin = p;
      while (p < text.size() && payload_char(text[p])) ++p;
      if (p == payload_begin || p >= text.size() || text[p] != ']') continue;
      ParsedToken t;
      t.token.entity_type = type;
      t.token.payload_b64 = std::string(text.substr(payload_begin, p - payload_begin));
      t.byte_start = i;
      t.byte_end = p + 1;
      t.valid = t.token.well_formed();
      out.push_back(std::move(t));
      i = p + 1;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  if (!out.empty()) {
    const unicode::Utf8Index index(text);
    for (auto& t : out) {
      t.start = index.codepoint_offset(t.byte_start);
      t.end = index.codepoint_offset(t.byte_end);
    }
  }
  return out;
}

}  // namespace cryptosynth::detcrypt
