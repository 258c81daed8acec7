#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace safegp {

// FNV-1a, stable across builds and platforms.
inline std::uint64_t hash_stream_name(std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// All randomness in the project flows from a single seed through named
// sub-streams so that components can be perturbed independently.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream,
                                std::uint64_t index = 0) {
  std::seed_seq seq{seed, hash_stream_name(stream), index};
  return std::mt19937_64(seq);
}

}  // namespace safegp
