#pragma once

// Deterministic, platform-independent hashing helpers. Every seeded decision
// in the harness (order coin, corruption draws, sampling) is derived from
// these rather than from <random> distributions, whose output is
// implementation-defined.

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fmtbias {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) noexcept {
  return splitmix64(seed ^ splitmix64(v));
}

inline constexpr std::uint64_t hash_combine(std::uint64_t seed, std::string_view s) noexcept {
  return hash_combine(seed, fnv1a64(s));
}

// Uniform double in [0, 1) from the top 53 bits.
inline constexpr double unit_double(std::uint64_t x) noexcept {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0x0f]);
  }
  return out;
}

// 16 hex chars of fnv1a64; for readable tags, not for integrity.
inline std::string short_hash(std::string_view s) {
  const std::uint64_t h = fnv1a64(s);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(h >> (56 - 8 * i));
  return to_hex(b, 8);
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("EVP_Digest(sha256) failed");
  }
  return to_hex(md.data(), len);
}

}  // namespace fmtbias
