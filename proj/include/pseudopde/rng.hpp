#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace pseudopde {

/// SplitMix64 step; used to expand seeds and mix indices.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministically derives a child seed from a parent seed and a list of indices.
/// Distinct index tuples give (statistically) unrelated seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t idx : indices) {
    state ^= out + 0x632BE59BD9B4E019ULL + (idx * 0xD6E8FEB86659FD93ULL);
    out = splitmix64(state);
  }
  return out;
}

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator, so it plugs into
/// the Boost.Random distributions, whose output is platform independent.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

/// Random stream for path `index` of an ensemble seeded with `seed`.
inline Xoshiro256pp path_stream(std::uint64_t seed, std::uint64_t index) {
  return Xoshiro256pp(derive_seed(seed, {index}));
}

}  // namespace pseudopde
