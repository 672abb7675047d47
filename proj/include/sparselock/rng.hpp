#pragma once

#include <cstddef>
#include <cstdint>

namespace sparselock {

// 64-bit finalizer used for seeding, digest mixing and the PRF keystream.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  return mix64(a + 0x9e3779b97f4a7c15ull * (b + 1));
}

// splitmix64. Deterministic across platforms, unlike std:: distributions,
// which matters because reruns with the same seed must be byte-identical.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed) {}

  std::uint64_t next_u64() { return mix64(s_ += 0x9e3779b97f4a7c15ull); }
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

  // uniform in [0, bound), bound > 0
  std::uint64_t below(std::uint64_t bound) {
    // multiply-shift with rejection of the biased tail
    for (;;) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * bound;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= bound || lo >= (0ull - bound) % bound) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  // uniform in [lo, hi] inclusive
  std::int64_t int_in(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  void fill_bytes(std::uint8_t* p, std::size_t n) {
    std::size_t i = 0;
    while (i + 8 <= n) {
      std::uint64_t v = next_u64();
      for (int b = 0; b < 8; ++b) p[i++] = static_cast<std::uint8_t>(v >> (8 * b));
    }
    if (i < n) {
      std::uint64_t v = next_u64();
      while (i < n) { p[i++] = static_cast<std::uint8_t>(v); v >>= 8; }
    }
  }

 private:
  std::uint64_t s_;
};

}  // namespace sparselock
