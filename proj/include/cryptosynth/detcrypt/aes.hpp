#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace cryptosynth::detcrypt {

inline constexpr std::size_t kBlockSize = 16;
using Block = std::array<std::uint8_t, kBlockSize>;

// FIPS-197 block cipher with 128-, 192- or 256-bit keys.
class Aes {
 public:
  // Throws std::invalid_argument unless key is 16, 24 or 32 bytes.
  explicit Aes(std::span<const std::uint8_t> key);

  Block encrypt_block(const Block& in) const noexcept;
  Block decrypt_block(const Block& in) const noexcept;

  int rounds() const noexcept { return rounds_; }

 private:
  int rounds_;
  std::array<std::uint32_t, 60> round_keys_{};
};

// Electronic codebook over whole blocks; data size must be a multiple of 16.
std::vector<std::uint8_t> ecb_encrypt(const Aes& aes, std::span<const std::uint8_t> data);
std::vector<std::uint8_t> ecb_decrypt(const Aes& aes, std::span<const std::uint8_t> data);

std::vector<std::uint8_t> pkcs7_pad(std::span<const std::uint8_t> data, std::size_t block = kBlockSize);
// False when the trailing padding is malformed; `out` is untouched then.
bool pkcs7_unpad(std::span<const std::uint8_t> data, std::vector<std::uint8_t>& out,
                 std::size_t block = kBlockSize);

}  // namespace cryptosynth::detcrypt
