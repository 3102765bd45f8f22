#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cryptosynth::detcrypt {

// Standard alphabet (A-Z a-z 0-9 + /) with '=' padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);

// Strict decode: length must be a multiple of 4, only alphabet characters,
// '=' only as the final one or two characters. nullopt otherwise.
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view s);

bool is_base64_char(char c) noexcept;

struct Base64Repair {
  std::string value;
  bool repaired = false;
};

// Appends '=' until the length is a multiple of 4. `repaired` is true only
// when something was appended and the result decodes.
Base64Repair repair_base64(std::string_view s);

}  // namespace cryptosynth::detcrypt
