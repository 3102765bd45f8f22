#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cryptosynth/common/entity.hpp"
#include "cryptosynth/common/error.hpp"
#include "cryptosynth/corpus/corpus.hpp"
#include "cryptosynth/detcrypt/aes.hpp"
#include "cryptosynth/detcrypt/key.hpp"
#include "cryptosynth/detcrypt/siv.hpp"
#include "cryptosynth/detcrypt/token.hpp"

namespace cryptosynth::detcrypt {

class EmptySurface : public Error {
 public:
  EmptySurface() : Error("EmptySurface", "entity surface is empty after canonicalization") {}
};

class OverlappingSpans : public Error {
 public:
  explicit OverlappingSpans(const std::string& detail) : Error("OverlappingSpans", detail) {}
};

using cryptosynth::InvalidSpan;

enum class CipherMode { Ecb, Siv };

std::string_view to_string(CipherMode m) noexcept;
std::optional<CipherMode> parse_cipher_mode(std::string_view s) noexcept;

struct CanonicalOptions {
  bool casefold = false;
};

// NFC, trim, then optional case folding.
std::string canonicalize(std::string_view surface, const CanonicalOptions& opts = {});

enum class DecryptStatus { Ok, OkRepairedBase64, FailBase64, FailPadding, FailNotInInventory };

std::string_view to_string(DecryptStatus s) noexcept;

struct DecryptOutcome {
  DecryptStatus status = DecryptStatus::FailBase64;
  std::optional<std::string> plaintext;
  std::string note;

  bool ok() const noexcept {
    return status == DecryptStatus::Ok || status == DecryptStatus::OkRepairedBase64;
  }
};

// Deterministic entity encryption under one key. Immutable; safe to share.
//
// ECB: payload = Base64(AES-ECB(key, PKCS7(utf8(canonical surface)))).
// SIV: payload = Base64(V || CTR(PKCS7(...))) with a 32-byte key split into
// MAC and CTR halves; the padded plaintext keeps every payload a multiple of 16.
class EntityCipher {
 public:
  explicit EntityCipher(KeyMaterial key, CipherMode mode = CipherMode::Ecb,
                        CanonicalOptions canonical = {});

  CipherToken encrypt(std::string_view surface, EntityType type) const;
  DecryptOutcome decrypt(const CipherToken& token) const;

  const KeyMaterial& key() const noexcept { return key_; }
  CipherMode mode() const noexcept { return mode_; }
  const CanonicalOptions& canonical() const noexcept { return canonical_; }

 private:
  KeyMaterial key_;
  CipherMode mode_;
  CanonicalOptions canonical_;
  Aes aes_;
  std::optional<AesSiv> siv_;
};

CipherToken encrypt_entity(std::string_view surface, EntityType type, const KeyMaterial& key,
                           CanonicalOptions canonical = {});
DecryptOutcome decrypt_token(const CipherToken& token, const KeyMaterial& key);

// Replaces every span's surface with its rendering (right to left) and
// records the key id in meta["key_id"]. Tokens are returned in text order.
std::pair<corpus::Document, std::vector<CipherToken>> rewrite_encrypt(
    const corpus::Document& doc, const std::vector<EntitySpan>& spans, const EntityCipher& cipher);

// Replaces each decryptable token with its plaintext; failures stay verbatim.
std::pair<std::string, std::vector<DecryptOutcome>> rewrite_decrypt(std::string_view text,
                                                                    const EntityCipher& cipher);

}  // namespace cryptosynth::detcrypt
