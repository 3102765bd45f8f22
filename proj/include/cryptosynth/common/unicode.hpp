#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers. Every offset exposed by the library is a codepoint offset;
// these are the only routines that translate between bytes and codepoints.
namespace cryptosynth::unicode {

bool is_valid_utf8(std::string_view s);

// Decodes UTF-8; invalid sequences become U+FFFD.
std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);
void append_utf8(std::string& out, char32_t cp);

std::size_t codepoint_length(std::string_view s);

// Maps codepoint positions to byte positions for one string.
class Utf8Index {
 public:
  explicit Utf8Index(std::string_view s);

  // Number of codepoints.
  std::size_t size() const noexcept { return byte_offsets_.size() - 1; }

  // Byte offset of codepoint `cp`; cp == size() yields the byte length.
  std::size_t byte_offset(std::size_t cp) const { return byte_offsets_.at(cp); }

  // Codepoint containing byte `b` (b must fall on a boundary to round-trip).
  std::size_t codepoint_offset(std::size_t b) const;

  std::string_view slice(std::string_view s, std::size_t cp_begin,
                         std::size_t cp_end) const {
    return s.substr(byte_offset(cp_begin), byte_offset(cp_end) - byte_offset(cp_begin));
  }

 private:
  std::vector<std::size_t> byte_offsets_;
};

// CJK ideographs, kana, hangul, CJK punctuation and fullwidth forms: the
// characters that count as one token each.
bool is_cjk(char32_t cp) noexcept;
bool is_space(char32_t cp) noexcept;

std::string trim(std::string_view s);

// ICU-backed normalization.
std::string nfc(std::string_view s);
std::string casefold(std::string_view s);

}  // namespace cryptosynth::unicode
