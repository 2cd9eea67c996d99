#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>
#include <vector>

namespace leafvit {

// SplitMix64 stream. Small state, closed-form step, identical output on
// every platform, which is what makes whole runs byte-reproducible.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_real(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t mix_u64(std::uint64_t a, std::uint64_t b) {
  // One SplitMix64 scramble of a ^ rotated b; enough to decorrelate tags.
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Derives an independent substream from a base seed and a purpose tag.
// Consumers that draw from different tags never perturb each other.
inline Prng derive_stream(std::uint64_t seed, std::string_view tag) {
  return Prng(detail::mix_u64(seed, detail::fnv1a64(tag)));
}

inline Prng derive_stream(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index) {
  return Prng(detail::mix_u64(detail::mix_u64(seed, detail::fnv1a64(tag)),
                              index));
}

// In-place Fisher-Yates shuffle driven by the given stream.
template <typename T>
void fisher_yates(std::vector<T>& items, Prng& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(items[i], items[j]);
  }
}

}  // namespace leafvit
