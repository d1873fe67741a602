// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/geometry.hpp"

namespace waveprompt {
namespace {

using testing::random_vector;

std::vector<VectorView> views(const std::vector<std::vector<float>>& set) {
  return {set.begin(), set.end()};
}

TEST(Cosine, KnownValues) {
  const std::vector<float> x = {1, 0};
  const std::vector<float> y = {0, 1};
  const std::vector<float> nx = {-2, 0};
  const std::vector<float> d = {1, 1};
  EXPECT_NEAR(cosine_distance(x, x), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(x, y), 1.0, 1e-15);
  EXPECT_NEAR(cosine_distance(x, nx), 2.0, 1e-15);
  EXPECT_NEAR(cosine_distance(x, d), 1.0 - 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, MatchesLongDoubleOracle) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> dim(1, 512);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t d = dim(gen);
    const auto u = random_vector(gen, d);
    const auto v = random_vector(gen, d);
    EXPECT_NEAR(cosine_distance(u, v), static_cast<double>(oracle::cosine_distance(u, v)), 1e-9);
  }
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 200; ++i) {
    const auto u = random_vector(gen, 64);
    auto v = random_vector(gen, 64);
    EXPECT_NEAR(cosine_distance(u, v), cosine_distance(v, u), 1e-12);
    std::vector<float> scaled = v;
    for (auto& x : scaled) x *= 32.0F;
    EXPECT_NEAR(cosine_distance(u, v), cosine_distance(u, scaled), 1e-9);
    const double d = cosine_distance(u, v);
    EXPECT_GE(d, 0.0 - 1e-12);
    EXPECT_LE(d, 2.0 + 1e-12);
  }
}

TEST(Cosine, RejectsMismatchAndZeroNorm) {
  const std::vector<float> a = {1, 2, 3};
  const std::vector<float> b = {1, 2};
  const std::vector<float> z = {0, 0, 0};
  EXPECT_THROW(cosine_distance(a, b), GeometryError);
  EXPECT_THROW(cosine_distance(a, z), GeometryError);
  EXPECT_THROW(cosine_distance(z, a), GeometryError);
}

TEST(Cosine, DoubleSecondArgumentMatchesFloat) {
  std::mt19937_64 gen(3);
  const auto u = random_vector(gen, 33);
  const auto v = random_vector(gen, 33);
  const std::vector<double> vd(v.begin(), v.end());
  EXPECT_NEAR(cosine_distance(u, std::span<const double>(vd)), cosine_distance(u, v), 1e-12);
}

TEST(Centroid, IsTheColumnMean) {
  const std::vector<std::vector<float>> set = {{1, 2}, {3, 4}, {5, 9}};
  const Centroid c = centroid(views(set));
  EXPECT_EQ(c.members, 3U);
  ASSERT_EQ(c.mean.size(), 2U);
  EXPECT_DOUBLE_EQ(c.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(c.mean[1], 5.0);
}

TEST(Centroid, RejectsEmptyAndRagged) {
  EXPECT_THROW(centroid({}), GeometryError);
  const std::vector<std::vector<float>> ragged = {{1, 2}, {3}};
  EXPECT_THROW(centroid(views(ragged)), GeometryError);
}

TEST(Representativeness, IsDistanceToCentroid) {
  const std::vector<std::vector<float>> set = {{1, 0}, {0, 1}};
  const Centroid c = centroid(views(set));
  const std::vector<float> e = {1, 0};
  EXPECT_NEAR(representativeness(e, c), 1.0 - 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Medoid, SmallExample) {
  // Mean direction is (1,1); the diagonal member is closest.
  const std::vector<std::vector<float>> set = {{1, 0}, {0.9F, 1.0F}, {0, 1}};
  EXPECT_EQ(medoid(views(set)), 1U);
}

TEST(Medoid, SingletonAndTies) {
  const std::vector<std::vector<float>> one = {{3, 4}};
  EXPECT_EQ(medoid(views(one)), 0U);
  const std::vector<std::vector<float>> twins = {{1, 0}, {0, 1}};
  EXPECT_EQ(medoid(views(twins)), 0U);
  const std::vector<std::vector<float>> same = {{2, 2}, {1, 1}, {4, 4}};
  EXPECT_EQ(medoid(views(same)), 0U);
  EXPECT_THROW(medoid({}), GeometryError);
}

TEST(Medoid, MatchesBruteForceOracle) {
  std::mt19937_64 gen(4);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::uniform_int_distribution<std::size_t> dim(2, 64);
  for (int i = 0; i < 500; ++i) {
    const std::size_t d = dim(gen);
    std::vector<std::vector<float>> set(size(gen));
    for (auto& v : set) v = random_vector(gen, d);
    EXPECT_EQ(medoid(views(set)), oracle::medoid(set)) << "set " << i;
  }
}

TEST(Medoid, IsAMember) {
  std::mt19937_64 gen(5);
  std::vector<std::vector<float>> set(17);
  for (auto& v : set) v = random_vector(gen, 8);
  EXPECT_LT(medoid(views(set)), set.size());
}

TEST(SmallestK, OrdersByScoreThenPosition) {
  const std::vector<double> s = {0.5, 0.1, 0.5, 0.0, 0.1};
  EXPECT_EQ(smallest_k(s, 3), (std::vector<std::size_t>{3, 1, 4}));
  EXPECT_EQ(smallest_k(s, 5), (std::vector<std::size_t>{3, 1, 4, 0, 2}));
  EXPECT_TRUE(smallest_k(s, 0).empty());
}

TEST(SmallestK, MatchesExhaustiveOracle) {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<std::size_t> size(1, 12);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = size(gen);
    std::vector<double> s(n);
    std::vector<long double> sl(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = coarse(gen) * 0.25;  // plenty of ties
      sl[j] = s[j];
    }
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, n)(gen);
    EXPECT_EQ(smallest_k(s, k), oracle::best_subset(sl, k));
  }
}

}  // namespace
}  // namespace waveprompt
