#ifndef CAPGEN_RNG_HPP_
#define CAPGEN_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace capgen {

// Seeded 64-bit generator. The uniform draws are computed from raw engine
// output so sequences do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  size_t below(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream seed for one (seed, epoch, item) triple.
inline uint64_t derive_seed(uint64_t seed, uint64_t epoch, std::string_view item) {
  return splitmix64(splitmix64(seed ^ splitmix64(epoch)) ^ fnv1a(item));
}

}  // namespace capgen

#endif  // CAPGEN_RNG_HPP_
