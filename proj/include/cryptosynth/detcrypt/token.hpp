#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cryptosynth/common/entity.hpp"

namespace cryptosynth::detcrypt {

// Fixed prefix table: PERSON->Person, LOCATION->Location, PHONE->Phone,
// ID_NUMBER->ID, BANK_CARD->Card, DATE->Date, ORG->Org, OTHER->Ent.
std::string_view prefix_for(EntityType t) noexcept;
std::optional<EntityType> type_for_prefix(std::string_view prefix) noexcept;

// A typed ciphertext rendered as "<Prefix>_[<payload_b64>]".
struct CipherToken {
  EntityType entity_type = EntityType::Other;
  std::string payload_b64;

  std::string rendering() const;

  // Payload is aligned Base64 that decodes to a non-empty multiple of 16 bytes.
  bool well_formed() const;

  friend bool operator==(const CipherToken&, const CipherToken&) = default;
};

std::string render(const CipherToken& token);

// Parses a complete rendering; nullopt if `text` is not exactly one token.
std::optional<CipherToken> parse_rendering(std::string_view text);

struct ParsedToken {
  CipherToken token;
  // Codepoint offsets, end exclusive.
  std::size_t start = 0;
  std::size_t end = 0;
  // Byte offsets into the scanned text.
  std::size_t byte_start = 0;
  std::size_t byte_end = 0;
  bool valid = false;
};

// Every maximal match of Prefix "_[" [A-Za-z0-9+/=]+ "]" in text order.
// Malformed payloads are reported with valid == false.
std::vector<ParsedToken> parse_cipher_tokens(std::string_view text);

}  // namespace cryptosynth::detcrypt
