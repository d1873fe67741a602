// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace waveprompt {

/// Read-only view of a 32-bit embedding vector.
using VectorView = std::span<const float>;

/// Arithmetic mean of a set of embeddings, kept at 64-bit precision.
struct Centroid {
  std::vector<double> mean;
  std::size_t members = 0;
};

/// 1 - u.v / (|u| |v|), accumulated in double. Throws GeometryError on a
/// dimension mismatch or a zero-norm argument.
double cosine_distance(VectorView u, VectorView v);
double cosine_distance(VectorView u, std::span<const double> v);

/// Throws GeometryError on an empty set or mixed dimensions.
Centroid centroid(std::span<const VectorView> set);

/// Distance of an embedding to its class centroid.
double representativeness(VectorView embedding, const Centroid& c);

/// Index of the member closest (cosine) to the set's mean; lowest index wins
/// ties. Throws GeometryError on an empty set.
std::size_t medoid(std::span<const VectorView> set);

/// Positions of the `count` smallest scores, ascending by (score, position).
std::vector<std::size_t> smallest_k(std::span<const double> scores, std::size_t count);

}  // namespace waveprompt
