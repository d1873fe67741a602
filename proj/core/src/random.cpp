// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/random.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace waveprompt {

namespace {
__extension__ using u128 = unsigned __int128;
}  // namespace

std::uint64_t Rng::bounded(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::bounded: bound must be positive");
  u128 m = static_cast<u128>(next_u64()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<u128>(next_u64()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t acc = 0;
  for (std::uint64_t w : words) acc = mix64(acc ^ w);
  return acc;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count, Rng& rng) {
  if (count > population) throw std::invalid_argument("sample_without_replacement: count exceeds population");
  std::vector<std::size_t> slots(population);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.bounded(population - i));
    std::swap(slots[i], slots[j]);
  }
  slots.resize(count);
  return slots;
}

}  // namespace waveprompt
