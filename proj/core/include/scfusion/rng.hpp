#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace scf::rng {

// All pseudo-randomness in the project flows through this header so that a
// seed reproduces the same scenes, parameter initializations, and noise
// streams across runs. The generator stack is fully named:
//   - stream splitting: SplitMix64 (Steele et al.)
//   - bulk generation:  std::mt19937_64 (standard-specified Mersenne Twister)
//   - uniforms:         53-bit mantissa mapping, (x >> 11) * 2^-53
//   - gaussians:        Box-Muller on two uniforms
// std:: distributions are avoided because their output is
// implementation-defined; the mappings here are explicit.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent substream from a base seed and a list of tags
// (e.g. {fnv1a64("noise"), frame, camera}). Tag order matters.
inline std::mt19937_64 substream(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t state = seed;
  uint64_t mixed = splitmix64(state);
  for (uint64_t t : tags) {
    state ^= t;
    mixed ^= splitmix64(state);
  }
  return std::mt19937_64(mixed);
}

// Uniform on [0, 1) with 53 random mantissa bits.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Standard normal via Box-Muller; consumes exactly two generator draws.
inline double gaussian(std::mt19937_64& g) {
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  while (u1 <= 0.0) u1 = uniform01(g);  // log(0) guard
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace scf::rng
