#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cryptosynth/common/error.hpp"

namespace cryptosynth::detcrypt {

class InvalidKey : public Error {
 public:
  explicit InvalidKey(const std::string& detail) : Error("InvalidKey", detail) {}
};

// 128- or 256-bit key plus a label recorded in document metadata.
class KeyMaterial {
 public:
  // Throws InvalidKey unless bytes.size() is 16 or 32. An empty key_id is
  // replaced by a fingerprint of the key.
  explicit KeyMaterial(std::vector<std::uint8_t> bytes, std::string key_id = {});

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  const std::string& key_id() const noexcept { return key_id_; }
  std::size_t size() const noexcept { return bytes_.size(); }

  // Hex-encoded key file (whitespace ignored).
  static KeyMaterial from_hex_file(const std::filesystem::path& path);
  static KeyMaterial from_hex(std::string_view hex);
  // PBKDF2-HMAC-SHA256.
  static KeyMaterial from_passphrase(std::string_view passphrase, std::size_t key_bytes = 16,
                                     std::string_view salt = "cryptosynth/v1",
                                     int iterations = 100000);

 private:
  std::vector<std::uint8_t> bytes_;
  std::string key_id_;
};

}  // namespace cryptosynth::detcrypt
