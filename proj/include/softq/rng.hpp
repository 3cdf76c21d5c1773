#ifndef SOFTQ_RNG_HPP_
#define SOFTQ_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace softq {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, stream); stream 0 is the default stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed + 0x632be59bd9b4e019ULL * (stream + 1));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

// Draws below avoid std distribution objects so that streams are identical
// across standard library implementations.

// Uniform in [0, 1), 53-bit resolution.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline int uniform_int(Rng& rng, int n) {
  int v = static_cast<int>(uniform_unit(rng) * static_cast<double>(n));
  return v < n ? v : n - 1;
}

// Standard normal via Box-Muller.
inline double normal_unit(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace softq

#endif  // SOFTQ_RNG_HPP_
