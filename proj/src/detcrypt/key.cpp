#include "cryptosynth/detcrypt/key.hpp"

#include <stdexcept>

#include <openssl/evp.h>

#include "cryptosynth/common/io.hpp"

namespace cryptosynth::detcrypt {

KeyMaterial::KeyMaterial(std::vector<std::uint8_t> bytes, std::string key_id)
    : bytes_(std::move(bytes)), key_id_(std::move(key_id)) {
  if (bytes_.size() != 16 && bytes_.size() != 32)
    throw InvalidKey("key must be 16 or 32 bytes, got " + std::to_string(bytes_.size()));
  if (key_id_.empty()) {
    const std::string raw(bytes_.begin(), bytes_.end());
    key_id_ = "key-" + io::sha256_hex("cryptosynth-key-id:" + raw).substr(0, 12);
  }
}

KeyMaterial KeyMaterial::from_hex(std::string_view hex) {
  std::string raw;
  try {
    raw = io::from_hex(hex);
  } catch (const std::invalid_argument& e) {
    throw InvalidKey(e.what());
  }
  return KeyMaterial(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

KeyMaterial KeyMaterial::from_hex_file(const std::filesystem::path& path) {
  return from_hex(io::read_file(path));
}

KeyMaterial KeyMaterial::from_passphrase(std::string_view passphrase, std::size_t key_bytes,
                                         std::string_view salt, int iterations) {
  if (passphrase.empty()) throw InvalidKey("empty passphrase");
  if (key_bytes != 16 && key_bytes != 32) throw InvalidKey("derived key must be 16 or 32 bytes");
  std::vector<std::uint8_t> out(key_bytes);
  const int ok = PKCS5_PBKDF2_HMAC(passphrase.data(), static_cast<int>(passphrase.size()),
                                   reinterpret_cast<const unsigned char*>(salt.data()),
                                   static_cast<int>(salt.size()), iterations, EVP_sha256(),
                                   static_cast<int>(out.size()), out.data());
  if (ok != 1) throw InvalidKey("PBKDF2 derivation failed");
  return KeyMaterial(std::move(out));
}

}  // namespace cryptosynth::detcrypt
