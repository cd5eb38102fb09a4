// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#ifndef VIDEOJSCC_RNG_HPP
#define VIDEOJSCC_RNG_HPP

#include <cstdint>
#include <random>

namespace videojscc {

// splitmix64 finalizer; good bit diffusion for combining seed words.
inline std::uint64_t mix_bits(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministically derives an independent stream seed from a base seed and
/// up to three stream coordinates (step index, lane, purpose tag, ...).
/// Training and evaluation key every random draw off this so that resuming a
/// run or re-running a sweep cell reproduces the exact same realizations.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t h = mix_bits(base ^ 0x6a09e667f3bcc908ULL);
  h = mix_bits(h ^ a);
  h = mix_bits(h ^ b);
  h = mix_bits(h ^ c);
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace videojscc

#endif  // VIDEOJSCC_RNG_HPP
