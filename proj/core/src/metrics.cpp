// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/metrics.hpp"

#include <numeric>
#include <optional>
#include <string>

#include "waveprompt/error.hpp"

namespace waveprompt {

namespace {

void check_square(const ConfusionMatrix& m) {
  if (m.empty()) throw MetricError("confusion matrix is empty");
  for (const auto& row : m) {
    if (row.size() != m.size()) throw MetricError("confusion matrix is not square");
  }
}

__extension__ using u128 = unsigned __int128;

u128 gcd(u128 a, u128 b) {
  while (b != 0) {
    const u128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

bool mul(u128 a, u128 b, u128& out) { return !__builtin_mul_overflow(a, b, &out); }

// 100 * sum_k(c_kk / n_k) / K as one reduced fraction. When numerator and
// denominator are exact doubles a single division rounds correctly.
std::optional<double> exact_bca(const ConfusionMatrix& m, const std::vector<std::uint64_t>& totals) {
  const u128 k = m.size();
  u128 lcm = 1;
  for (std::uint64_t n : totals) {
    if (!mul(lcm / gcd(lcm, n), n, lcm)) return std::nullopt;
  }
  u128 num = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    u128 term = 0;
    if (!mul(m[i][i], lcm / totals[i], term) || __builtin_add_overflow(num, term, &num)) return std::nullopt;
  }
  u128 den = 0;
  if (!mul(num, 100, num) || !mul(k, lcm, den)) return std::nullopt;
  const u128 g = gcd(num, den);
  num /= g;
  den /= g;
  constexpr u128 kExact = u128{1} << 53;
  if (num > kExact || den > kExact) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix make_confusion(int num_classes) {
  if (num_classes < 1) throw MetricError("confusion matrix needs at least one class");
  const auto k = static_cast<std::size_t>(num_classes);
  return ConfusionMatrix(k, std::vector<std::uint64_t>(k, 0));
}

double bca(const ConfusionMatrix& confusion) {
  check_square(confusion);
  std::vector<std::uint64_t> totals;
  for (std::size_t k = 0; k < confusion.size(); ++k) {
    totals.push_back(std::accumulate(confusion[k].begin(), confusion[k].end(), std::uint64_t{0}));
    if (totals.back() == 0) {
      throw MetricError("class " + std::to_string(k) + " has no true instances; BCA is undefined");
    }
  }
  if (const auto exact = exact_bca(confusion, totals)) return *exact;
  double sum = 0.0;
  for (std::size_t k = 0; k < confusion.size(); ++k) {
    sum += static_cast<double>(confusion[k][k]) / static_cast<double>(totals[k]);
  }
  return 100.0 * sum / static_cast<double>(confusion.size());
}

double accuracy(const ConfusionMatrix& confusion) {
  check_square(confusion);
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < confusion.size(); ++k) {
    correct += confusion[k][k];
    total += std::accumulate(confusion[k].begin(), confusion[k].end(), std::uint64_t{0});
  }
  if (total == 0) throw MetricError("confusion matrix has no entries");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace waveprompt
