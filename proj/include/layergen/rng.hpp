// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace layergen {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

/// Absorb one field into a running hash state (splitmix64 increment + mix).
inline std::uint64_t hash_absorb(std::uint64_t state, std::uint64_t value) {
  return mix64(state + 0x9E3779B97F4A7C15ull + value);
}

/// Independent generator for substream `index` of a run-level seed.
/// Streams 0, 1, 2, ... are used for init / training sampling / test set.
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
  return Rng(mix64(hash_absorb(seed, index)));
}

} // namespace layergen
