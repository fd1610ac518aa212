#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>

namespace pdx {

// Counter-based generator: output i is mix64(seed + (i+1)*GOLDEN), the
// splitmix64 finalizer over an affine counter stream.  Identical sequences on
// every platform, trivially seekable, no hidden global state.
inline uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed) {}

  uint64_t next_u64() { return mix64(seed_ + (++ctr_) * 0x9E3779B97F4A7C15ull); }

  // uniform in [0,1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via Box-Muller; draws two uniforms per pair, caches the spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t ctr_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derive an independent child seed from a parent seed and a stream tag, so
// pipeline stages can branch reproducible sub-streams without coordination.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64 offset basis
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return mix64(seed ^ h);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
  return mix64(seed ^ mix64(index + 0x51ED270B9ull));
}

}  // namespace pdx
