// Copyright 2026 the chemlm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace chemlm {

// Pinned 64-bit mixing function (splitmix64 finalizer). Used wherever a
// stable, platform-independent hash of small integer tuples is needed
// (fingerprint shells, canonical invariants). Seed is part of the contract.
inline constexpr std::uint64_t kHashSeed = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

// FNV-1a over raw bytes; used for run-manifest content hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

// Bounded draw and shuffle with pinned algorithms: std::shuffle and
// uniform_int_distribution are implementation-defined, which would break
// the cross-platform determinism contract.
inline std::uint64_t rand_below(Rng& rng, std::uint64_t n) {
  // modulo reduction; bias is irrelevant at desk scale, determinism is not
  return rng() % n;
}

inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Normal draws via Box-Muller, again pinned (std::normal_distribution is
// implementation-defined).
inline double rand_normal(Rng& rng) {
  double u1 = rand_unit(rng);
  double u2 = rand_unit(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rand_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace chemlm
