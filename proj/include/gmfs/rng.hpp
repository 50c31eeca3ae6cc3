#pragma once

// Counter-based random numbers (Philox4x32-10). Every draw is a pure function
// of a 64-bit key and a 128-bit counter, so replay, coupling and parallel
// evaluation never depend on call order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gmfs::rng {

using Counter = std::array<std::uint32_t, 4>;

/// Domain tags mixed into keys so independent streams never collide.
enum class Stream : std::uint64_t {
  brownian = 1,
  initial = 2,
  edges = 3,
  bootstrap = 4,
  certify = 5,
  concentration = 6,
  burn_in = 7,
  misc = 8,
};

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives a stream key from a seed, a domain tag and up to two ids.
constexpr std::uint64_t derive_key(std::uint64_t seed, Stream tag, std::uint64_t a = 0,
                                   std::uint64_t b = 0) {
  std::uint64_t k = splitmix64(seed ^ 0x6A09E667F3BCC909ull);
  k = splitmix64(k ^ static_cast<std::uint64_t>(tag));
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ (b + 0x3C6EF372FE94F82Bull));
  return k;
}

constexpr Counter philox4x32(Counter ctr, std::uint64_t key) {
  constexpr std::uint32_t m0 = 0xD2511F53u;
  constexpr std::uint32_t m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u;
  constexpr std::uint32_t w1 = 0xBB67AE85u;
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += w0;
    k1 += w1;
  }
  return ctr;
}

constexpr Counter make_counter(std::uint64_t a, std::uint64_t b) {
  return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
}

/// Uniform in the open interval (0, 1) from two 32-bit words (53 bits).
constexpr double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0) {
  const Counter r = philox4x32(make_counter(a, b), key);
  return to_unit_open(r[0], r[1]);
}

/// Standard normal via Box-Muller on one Philox block.
inline double normal(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0) {
  const Counter r = philox4x32(make_counter(a, b), key);
  const double u1 = to_unit_open(r[0], r[1]);
  const double u2 = to_unit_open(r[2], r[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential convenience wrapper over a keyed stream; position is explicit.
class KeyedStream {
 public:
  explicit KeyedStream(std::uint64_t key) : key_(key) {}
  double uniform() { return rng::uniform(key_, pos_++); }
  double normal() { return rng::normal(key_, pos_++); }
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound;
  }
  std::uint64_t position() const { return pos_; }

 private:
  std::uint64_t key_;
  std::uint64_t pos_ = 0;
};

}  // namespace gmfs::rng
