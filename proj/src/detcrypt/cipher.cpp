#include "cryptosynth/detcrypt/cipher.hpp"

#include <algorithm>

#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/detcrypt/base64.hpp"

namespace cryptosynth::detcrypt {
namespace {

std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

std::string_view to_string(CipherMode m) noexcept { return m == CipherMode::Siv ? "siv" : "ecb"; }

std::optional<CipherMode> parse_cipher_mode(std::string_view s) noexcept {
  if (s == "ecb") return CipherMode::Ecb;
  if (s == "siv") return CipherMode::Siv;
  return std::nullopt;
}

std::string canonicalize(std::string_view surface, const CanonicalOptions& opts) {
  std::string out = unicode::trim(unicode::nfc(surface));
  if (opts.casefold) out = unicode::nfc(unicode::casefold(out));
  return out;
}

std::string_view to_string(DecryptStatus s) noexcept {
  switch (s) {
    case DecryptStatus::Ok: return "ok";
    case DecryptStatus::OkRepairedBase64: return "ok_repaired_base64";
    case DecryptStatus::FailBase64: return "fail_base64";
    case DecryptStatus::FailPadding: return "fail_padding";
    case DecryptStatus::FailNotInInventory: return "fail_not_in_inventory";
  }
  return "fail_base64";
}

EntityCipher::EntityCipher(KeyMaterial key, CipherMode mode, CanonicalOptions canonical)
    : key_(std::move(key)), mode_(mode), canonical_(canonical), aes_(key_.bytes()) {
  if (mode_ == CipherMode::Siv) {
    if (key_.size() != 32) throw InvalidKey("siv mode requires a 32-byte key");
    siv_.emplace(key_.bytes());
  }
}

CipherToken EntityCipher::encrypt(std::string_view surface, EntityType type) const {
  const std::string canonical = canonicalize(surface, canonical_);
  if (canonical.empty()) throw EmptySurface();
  const auto padded = pkcs7_pad(as_bytes(canonical));
  const auto sealed = mode_ == CipherMode::Siv ? siv_->seal(padded) : ecb_encrypt(aes_, padded);
  return CipherToken{type, base64_encode(sealed)};
}

DecryptOutcome EntityCipher::decrypt(const CipherToken& token) const {
  DecryptOutcome out;
  std::string payload = token.payload_b64;
  bool repaired = false;
  if (payload.size() % 4 != 0) {
    auto fix = repair_base64(payload);
    if (!fix.repaired) {
      out.status = DecryptStatus::FailBase64;
      out.note = "payload length not a multiple of 4 and '=' repair did not decode";
      return out;
    }
    payload = std::move(fix.value);
    repaired = true;
  }
  const auto bytes = base64_decode(payload);
  if (!bytes) {
    out.status = DecryptStatus::FailBase64;
    out.note = "payload is not valid Base64";
    return out;
  }
  const std::size_t min_size = mode_ == CipherMode::Siv ? 2 * kBlockSize : kBlockSize;
  if (bytes->size() < min_size || bytes->size() % kBlockSize != 0) {
    out.status = DecryptStatus::FailPadding;
    out.note = "ciphertext of " + std::to_string(bytes->size()) +
               " bytes is not padded to a multiple of 16 bytes";
    return out;
  }
  std::vector<std::uint8_t> padded;
  if (mode_ == CipherMode::Siv) {
    auto opened = siv_->open(*bytes);
    if (!opened) {
      out.status = DecryptStatus::FailPadding;
      out.note = "synthetic IV does not verify";
      return out;
    }
    padded = std::move(*opened);
  } else {
    padded = ecb_decrypt(aes_, *bytes);
  }
  std::vector<std::uint8_t> plain;
  if (!pkcs7_unpad(padded, plain)) {
    out.status = DecryptStatus::FailPadding;
    out.note = "invalid padding bytes";
    return out;
  }
  std::string text(plain.begin(), plain.end());
  if (!unicode::is_valid_utf8(text)) {
    out.status = DecryptStatus::FailPadding;
    out.note = "plaintext is not valid UTF-8";
    return out;
  }
  out.status = repaired ? DecryptStatus::OkRepairedBase64 : DecryptStatus::Ok;
  out.plaintext = std::move(text);
  if (repaired) out.note = "revised Base64 payload " + payload;
  return out;
}

CipherToken encrypt_entity(std::string_view surface, EntityType type, const KeyMaterial& key,
                           CanonicalOptions canonical) {
  return EntityCipher(key, CipherMode::Ecb, canonical).encrypt(surface, type);
}

DecryptOutcome decrypt_token(const CipherToken& token, const KeyMaterial& key) {
  return EntityCipher(key).decrypt(token);
}

std::pair<corpus::Document, std::vector<CipherToken>> rewrite_encrypt(
    const corpus::Document& doc, const std::vector<EntitySpan>& spans, const EntityCipher& cipher) {
  std::vector<EntitySpan> ordered = spans;
  std::sort(ordered.begin(), ordered.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  const unicode::Utf8Index index(doc.text);
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const EntitySpan& s = ordered[i];
    if (s.start >= s.end || s.end > index.size() || index.slice(doc.text, s.start, s.end) != s.surface)
      throw InvalidSpan("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                        ") does not match document '" + doc.doc_id + "'");
    if (i > 0 && ordered[i - 1].end > s.start)
      throw OverlappingSpans("spans overlap at codepoint " + std::to_string(s.start) + " in '" +
                             doc.doc_id + "'");
  }

  corpus::Document out = doc;
  std::vector<CipherToken> tokens(ordered.size());
  for (std::size_t i = ordered.size(); i-- > 0;) {
    const EntitySpan& s = ordered[i];
    tokens[i] = cipher.encrypt(s.surface, s.entity_type);
    const std::size_t b = index.byte_offset(s.start);
    const std::size_t e = index.byte_offset(s.end);
    out.text.replace(b, e - b, tokens[i].rendering());
  }
  out.meta["key_id"] = cipher.key().key_id();
  return {std::move(out), std::move(tokens)};
}

std::pair<std::string, std::vector<DecryptOutcome>> rewrite_decrypt(std::string_view text,
                                                                    const EntityCipher& cipher) {
  const auto parsed = parse_cipher_tokens(text);
  std::vector<DecryptOutcome> outcomes;
  outcomes.reserve(parsed.size());
  std::string out;
  out.reserve(text.size());
  std::size_t cursor = 0;
  for (const auto& p : parsed) {
    out.append(text.substr(cursor, p.byte_start - cursor));
    auto outcome = cipher.decrypt(p.token);
    if (outcome.ok()) {
      out.append(*outcome.plaintext);
    } else {
      out.append(text.substr(p.byte_start, p.byte_end - p.byte_start));
    }
    outcomes.push_back(std::move(outcome));
    cursor = p.byte_end;
  }
  out.append(text.substr(cursor));
  return {std::move(out), std::move(outcomes)};
}

}  // namespace cryptosynth::detcrypt
