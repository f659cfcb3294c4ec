#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pcenet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of stream keys into one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) { return splitmix64(seed ^ splitmix64(a)); }
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(seed, a, b), c);
}

/// FNV-1a; stable across platforms, used to turn image ids into stream keys.
inline std::uint64_t hash_id(std::string_view id) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// mt19937_64 with distribution code written out here so that draws are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive integer range; lo <= hi.
  long long uniform_int(long long lo, long long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<long long>(engine_());
    return lo + static_cast<long long>(engine_() % span);
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcenet
