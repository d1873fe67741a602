// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace waveprompt {

/// Seeded generator whose outputs are identical on every platform.
///
/// std::mt19937_64 is bit-exact by the standard, but the standard
/// distributions are not, so the draws below are written out explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t bounded(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform01();

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over bytes; stable hash for strings used in seed derivation.
std::uint64_t fnv1a64(std::string_view text);

/// Folds a list of words into one seed: mix64(acc ^ word) per word.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words);

/// Draws `count` distinct positions from [0, population) by partial
/// Fisher-Yates: for i in [0, count) swap slot i with slot i + bounded(population - i).
/// Returned in draw order. Requires count <= population.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count, Rng& rng);

}  // namespace waveprompt
