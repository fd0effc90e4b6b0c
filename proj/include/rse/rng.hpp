#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace rse::rng {

// Counter-based pseudo-randomness built on the splitmix64 finalizer. Every
// draw is a pure function of (key, counter), so independent streams can be
// derived for any (seed, labels...) tuple and consumed sparsely or in
// parallel without desynchronizing sibling streams. This is what makes
// coupled Monte Carlo experiments and byte-identical reruns possible.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Order-sensitive fold of one value into a running key.
constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t value) {
  return splitmix(key ^ splitmix(value + kGolden));
}

// Stable 64-bit hash for string labels (FNV-1a).
constexpr std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Derives a stream key from a seed and a path of labels. derive(s, {a, b})
// and derive(s, {b, a}) are unrelated keys.
constexpr std::uint64_t derive(std::uint64_t seed,
                               std::initializer_list<std::uint64_t> parts) {
  std::uint64_t key = splitmix(seed);
  for (std::uint64_t p : parts) key = combine(key, p);
  return key;
}

// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
constexpr double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// A randomness stream addressable by counter. uniform_at(c) is stateless;
// next_uniform() is the conventional sequential interface over it.
struct Stream {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  constexpr std::uint64_t bits_at(std::uint64_t c) const { return combine(key, c); }
  constexpr double uniform_at(std::uint64_t c) const { return to_unit(bits_at(c)); }
  std::uint64_t next_bits() { return bits_at(counter++); }
  double next_uniform() { return uniform_at(counter++); }
};

}  // namespace rse::rng
