#pragma once

#include <cstdint>
#include <random>

namespace carbonsched {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream id so independent noise sources never share a sequence.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t forecast = 1;
inline constexpr std::uint64_t curve = 2;
inline constexpr std::uint64_t denial = 3;
inline constexpr std::uint64_t refresh = 4;
}  // namespace seed_stream

}  // namespace carbonsched
