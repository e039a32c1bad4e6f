#pragma once

// Counter-based random streams. A stream is fully determined by
// (master seed, chain, op, purpose), so chains can be simulated in any order
// and on any number of threads with identical results.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace ctmc {

enum class Purpose : std::uint64_t { init = 1, reverse = 2, forward = 3, perturb = 4, denoise = 5, misc = 6 };

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

/// Satisfies UniformRandomBitGenerator, so std distributions accept it.
class Stream {
 public:
  using result_type = std::uint64_t;

  constexpr Stream() = default;
  constexpr explicit Stream(std::uint64_t key) : key_(key) {}
  constexpr Stream(std::uint64_t seed, std::uint64_t chain, std::uint64_t op, Purpose purpose)
      : key_(hash_combine(hash_combine(hash_combine(splitmix64(seed), chain), op),
                          static_cast<std::uint64_t>(purpose))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// A child stream, independent of this one's draws.
  constexpr Stream split(std::uint64_t tag) const { return Stream(hash_combine(key_, tag ^ 0xa0761d6478bd642fULL)); }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

inline double exponential(Stream& rng) { return -std::log1p(-rng.uniform()); }

/// Uniform draw from the (n-1)-simplex, i.e. Dirichlet(1, ..., 1).
inline std::vector<double> dirichlet_ones(int n, Stream& rng) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& v : p) total += (v = exponential(rng));
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace ctmc
