#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mcar {

/// Deterministic PRNG: xoshiro256** seeded through splitmix64.
/// The full draw sequence is fixed across platforms:
///  - next()          raw 64-bit output of xoshiro256**
///  - uniform()       (next() >> 11) * 2^-53, in [0,1)
///  - uniform_int(n)  128-bit multiply-shift reduction of next()
///  - normal(...)     Box-Muller on two uniform() draws
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      // splitmix64
      x += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      s = z ^ (z >> 31);
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0,1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0,n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire multiply-shift; slight bias is irrelevant at our ranges and the
    // sequence stays platform-independent.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Uniform integer in [lo,hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Uniform float in [lo,hi).
  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform() * (hi - lo));
  }

  bool coin() { return (next() >> 63) != 0; }

  /// Standard normal via Box-Muller (one value per two uniform draws).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Fisher-Yates shuffle with this generator (std::shuffle is not
  /// cross-platform stable).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0,n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

inline std::vector<int> Rng::sample_without_replacement(int n, int k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < k && !pool.empty(); ++i) {
    const std::size_t j = uniform_int(pool.size());
    out.push_back(pool[j]);
    pool.erase(pool.begin() + j);
  }
  return out;
}

}  // namespace mcar
