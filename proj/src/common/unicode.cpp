#include "cryptosynth/common/unicode.hpp"

#include <algorithm>
#include <stdexcept>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/utypes.h>

namespace cryptosynth::unicode {
namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Returns the sequence length for a lead byte, 0 if it cannot start one.
int sequence_length(unsigned char lead) noexcept {
  if (lead < 0x80) return 1;
  if (lead >= 0xC2 && lead <= 0xDF) return 2;
  if (lead >= 0xE0 && lead <= 0xEF) return 3;
  if (lead >= 0xF0 && lead <= 0xF4) return 4;
  return 0;
}

// Decodes one codepoint at `i`, advancing it. Returns false on malformed input
// (i then advances by one byte).
bool next(std::string_view s, std::size_t& i, char32_t& cp) noexcept {
  const auto lead = static_cast<unsigned char>(s[i]);
  const int len = sequence_length(lead);
  if (len == 0 || i + len > s.size()) {
    ++i;
    return false;
  }
  if (len == 1) {
    cp = lead;
    ++i;
    return true;
  }
  char32_t value = lead & (0x7F >> len);
  for (int k = 1; k < len; ++k) {
    const auto c = static_cast<unsigned char>(s[i + k]);
    if ((c & 0xC0) != 0x80) {
      ++i;
      return false;
    }
    value = (value << 6) | (c & 0x3F);
  }
  // Overlongs, surrogates and out-of-range values.
  if ((len == 3 && value < 0x800) || (len == 4 && (value < 0x10000 || value > 0x10FFFF)) ||
      (value >= 0xD800 && value <= 0xDFFF)) {
    ++i;
    return false;
  }
  cp = value;
  i += len;
  return true;
}

std::string from_icu(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

}  // namespace

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  char32_t cp = 0;
  while (i < s.size()) {
    if (!next(s, i, cp)) return false;
  }
  return true;
}

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char32_t cp = 0;
    out.push_back(next(s, i, cp) ? cp : kReplacement);
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

std::size_t codepoint_length(std::string_view s) {
  std::size_t n = 0;
  std::size_t i = 0;
  char32_t cp = 0;
  while (i < s.size()) {
    next(s, i, cp);
    ++n;
  }
  return n;
}

Utf8Index::Utf8Index(std::string_view s) {
  byte_offsets_.reserve(s.size() + 1);
  std::size_t i = 0;
  char32_t cp = 0;
  while (i < s.size()) {
    byte_offsets_.push_back(i);
    next(s, i, cp);
  }
  byte_offsets_.push_back(s.size());
}

std::size_t Utf8Index::codepoint_offset(std::size_t b) const {
  auto it = std::upper_bound(byte_offsets_.begin(), byte_offsets_.end(), b);
  return static_cast<std::size_t>(it - byte_offsets_.begin()) - 1;
}

bool is_cjk(char32_t cp) noexcept {
  return (cp >= 0x2E80 && cp <= 0x2FDF) ||   // radicals
         (cp >= 0x3000 && cp <= 0x303F) ||   // CJK symbols and punctuation
         (cp >= 0x3040 && cp <= 0x30FF) ||   // hiragana, katakana
         (cp >= 0x3100 && cp <= 0x31FF) ||   // bopomofo, kanbun, strokes
         (cp >= 0x3400 && cp <= 0x4DBF) ||   // extension A
         (cp >= 0x4E00 && cp <= 0x9FFF) ||   // unified ideographs
         (cp >= 0xAC00 && cp <= 0xD7AF) ||   // hangul syllables
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // compatibility ideographs
         (cp >= 0xFE30 && cp <= 0xFE4F) ||   // compatibility forms
         (cp >= 0xFF00 && cp <= 0xFFEF) ||   // half/fullwidth forms
         (cp >= 0x20000 && cp <= 0x3134F);   // extensions B..G
}

bool is_space(char32_t cp) noexcept {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::string trim(std::string_view s) {
  const std::u32string cps = decode(s);
  std::size_t b = 0;
  std::size_t e = cps.size();
  while (b < e && is_space(cps[b])) ++b;
  while (e > b && is_space(cps[e - 1])) --e;
  return encode(std::u32string_view(cps).substr(b, e - b));
}

std::string nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString out = norm->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalization failed");
  return from_icu(out);
}

std::string casefold(std::string_view s) {
  auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.foldCase();
  return from_icu(u);
}

}  // namespace cryptosynth::unicode
