#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cryptosynth/detcrypt/aes.hpp"

// AES-SIV (RFC 5297) over the in-repo AES core.
namespace cryptosynth::detcrypt {

// AES-CMAC (RFC 4493).
Block cmac(const Aes& aes, std::span<const std::uint8_t> message);

class AesSiv {
 public:
  // Key is K1 || K2 with equal halves of 16, 24 or 32 bytes.
  explicit AesSiv(std::span<const std::uint8_t> key);

  // Returns V || C.
  std::vector<std::uint8_t> seal(std::span<const std::uint8_t> plaintext,
                                 std::span<const std::vector<std::uint8_t>> associated = {}) const;
  // nullopt when the synthetic IV does not verify.
  std::optional<std::vector<std::uint8_t>> open(std::span<const std::uint8_t> sealed,
                                                std::span<const std::vector<std::uint8_t>> associated = {}) const;

 private:
  Block s2v(std::span<const std::vector<std::uint8_t>> associated,
            std::span<const std::uint8_t> plaintext) const;
  std::vector<std::uint8_t> ctr(const Block& iv, std::span<const std::uint8_t> data) const;

  Aes mac_;
  Aes ctr_;
};

}  // namespace cryptosynth::detcrypt
