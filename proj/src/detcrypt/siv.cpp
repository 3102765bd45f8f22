#include "cryptosynth/detcrypt/siv.hpp"

#include <stdexcept>

namespace cryptosynth::detcrypt {
namespace {

Block dbl(const Block& in) noexcept {
  Block out{};
  const bool carry = (in[0] & 0x80) != 0;
  for (std::size_t i = 0; i < kBlockSize; ++i) {
    out[i] = static_cast<std::uint8_t>(in[i] << 1);
    if (i + 1 < kBlockSize) out[i] |= static_cast<std::uint8_t>(in[i + 1] >> 7);
  }
  if (carry) out[kBlockSize - 1] ^= 0x87;
  return out;
}

void xor_into(Block& dst, const std::uint8_t* src) noexcept {
  for (std::size_t i = 0; i < kBlockSize; ++i) dst[i] ^= src[i];
}

std::span<const std::uint8_t> half(std::span<const std::uint8_t> key, bool second) {
  if (key.size() != 32 && key.size() != 48 && key.size() != 64)
    throw std::invalid_argument("AES-SIV key must be 32, 48 or 64 bytes");
  const std::size_t h = key.size() / 2;
  return second ? key.subspan(h, h) : key.subspan(0, h);
}

}  // namespace

Block cmac(const Aes& aes, std::span<const std::uint8_t> message) {
  const Block l = aes.encrypt_block(Block{});
  const Block k1 = dbl(l);
  const Block k2 = dbl(k1);

  const std::size_t n = message.empty() ? 1 : (message.size() + kBlockSize - 1) / kBlockSize;
  const bool complete = !message.empty() && message.size() % kBlockSize == 0;

  Block x{};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    xor_into(x, message.data() + i * kBlockSize);
    x = aes.encrypt_block(x);
  }
  Block last{};
  const std::size_t off = (n - 1) * kBlockSize;
  const std::size_t rem = message.size() - off;
  std::copy_n(message.begin() + static_cast<std::ptrdiff_t>(off), rem, last.begin());
  if (complete) {
    xor_into(last, k1.data());
  } else {
    last[rem] = 0x80;
    xor_into(last, k2.data());
  }
  xor_into(x, last.data());
  return aes.encrypt_block(x);
}

AesSiv::AesSiv(std::span<const std::uint8_t> key) : mac_(half(key, false)), ctr_(half(key, true)) {}

Block AesSiv::s2v(std::span<const std::vector<std::uint8_t>> associated,
                  std::span<const std::uint8_t> plaintext) const {
  Block d = cmac(mac_, Block{});
  for (const auto& ad : associated) {
    d = dbl(d);
    const Block m = cmac(mac_, ad);
    xor_into(d, m.data());
  }
  if (plaintext.size() >= kBlockSize) {
    std::vector<std::uint8_t> t(plaintext.begin(), plaintext.end());
    const std::size_t off = t.size() - kBlockSize;
    for (std::size_t i = 0; i < kBlockSize; ++i) t[off + i] ^= d[i];
    return cmac(mac_, t);
  }
  Block t = dbl(d);
  Block padded{};
  std::copy(plaintext.begin(), plaintext.end(), padded.begin());
  padded[plaintext.size()] = 0x80;
  xor_into(t, padded.data());
  return cmac(mac_, t);
}

std::vector<std::uint8_t> AesSiv::ctr(const Block& iv, std::span<const std::uint8_t> data) const {
  Block counter = iv;
  // Clear the top bit of the last two 32-bit words.
  counter[8] &= 0x7f;
  counter[12] &= 0x7f;
  std::vector<std::uint8_t> out(data.begin(), data.end());
  for (std::size_t off = 0; off < out.size(); off += kBlockSize) {
    const Block ks = ctr_.encrypt_block(counter);
    const std::size_t n = std::min(kBlockSize, out.size() - off);
    for (std::size_t i = 0; i < n; ++i) out[off + i] ^= ks[i];
    for (int i = static_cast<int>(kBlockSize) - 1; i >= 0; --i) {
      if (++counter[static_cast<std::size_t>(i)] != 0) break;
    }
  }
  return out;
}

std::vector<std::uint8_t> AesSiv::seal(std::span<const std::uint8_t> plaintext,
                                       std::span<const std::vector<std::uint8_t>> associated) const {
  const Block v = s2v(associated, plaintext);
  std::vector<std::uint8_t> out(v.begin(), v.end());
  const auto c = ctr(v, plaintext);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::optional<std::vector<std::uint8_t>> AesSiv::open(
    std::span<const std::uint8_t> sealed, std::span<const std::vector<std::uint8_t>> associated) const {
  if (sealed.size() < kBlockSize) return std::nullopt;
  Block v;
  std::copy_n(sealed.begin(), kBlockSize, v.begin());
  auto plain = ctr(v, sealed.subspan(kBlockSize));
  const Block check = s2v(associated, plain);
  std::uint8_t diff = 0;
  for (std::size_t i = 0; i < kBlockSize; ++i) diff |= static_cast<std::uint8_t>(check[i] ^ v[i]);
  if (diff != 0) return std::nullopt;
  return plain;
}

}  // namespace cryptosynth::detcrypt
