// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "waveprompt/error.hpp"

namespace waveprompt {

namespace {

template <typename A, typename B>
double cosine_distance_impl(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    throw GeometryError("cosine_distance: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()) + ")");
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw GeometryError("cosine_distance: zero-norm vector");
  // sqrt(uu * uu) == uu exactly, so d(u, u) is exactly 0.
  const double d = 1.0 - dot / std::sqrt(uu * vv);
  return std::clamp(d, 0.0, 2.0);
}

}  // namespace

double cosine_distance(VectorView u, VectorView v) { return cosine_distance_impl(u, v); }

double cosine_distance(VectorView u, std::span<const double> v) { return cosine_distance_impl(u, v); }

Centroid centroid(std::span<const VectorView> set) {
  if (set.empty()) throw GeometryError("centroid: empty set");
  Centroid c;
  c.mean.assign(set.front().size(), 0.0);
  for (const VectorView v : set) {
    if (v.size() != c.mean.size()) throw GeometryError("centroid: mixed dimensions");
    for (std::size_t i = 0; i < v.size(); ++i) c.mean[i] += v[i];
  }
  const double n = static_cast<double>(set.size());
  for (double& m : c.mean) m /= n;
  c.members = set.size();
  return c;
}

double representativeness(VectorView embedding, const Centroid& c) { return cosine_distance(embedding, c.mean); }

std::size_t medoid(std::span<const VectorView> set) {
  const Centroid c = centroid(set);
  std::size_t best = 0;
  double best_d = cosine_distance(set[0], c.mean);
  for (std::size_t i = 1; i < set.size(); ++i) {
    const double d = cosine_distance(set[i], c.mean);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::vector<std::size_t> smallest_k(std::span<const double> scores, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] < scores[b] || (scores[a] == scores[b] && a < b); });
  order.resize(count);
  return order;
}

}  // namespace waveprompt
