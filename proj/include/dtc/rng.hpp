#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dtc {

// SplitMix64 step: advances the state and returns a mixed 64-bit word.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, component). Chaining calls
// over index tuples gives per-task seeds that are stable across platforms
// and across the order of task execution.
inline uint64_t mix_seed(uint64_t seed, uint64_t component) {
  uint64_t s = seed ^ (component + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
  return splitmix64(s);
}

// Deterministic generator used everywhere instead of <random> distributions,
// whose sequences are not pinned down by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // standard normal, polar Box-Muller
  double gaussian() {
    if (haveSpare_) {
      haveSpare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    haveSpare_ = true;
    return u * f;
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool haveSpare_ = false;
};

// FNV-1a 64-bit, used for content-addressing payloads and manifests.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xCBF29CE484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace dtc
