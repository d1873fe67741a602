// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/synthetic.hpp"

#include <cmath>
#include <map>

#include "waveprompt/error.hpp"
#include "waveprompt/random.hpp"

namespace waveprompt {

namespace {

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

EmbeddingStore synthesize_embeddings(const DatasetManifest& dataset, const RenderConfig& render,
                                     const EmbeddingSynthSpec& spec, std::uint64_t seed, const RenderFn& render_fn) {
  if (spec.dimension == 0) throw ConfigError("synthetic embeddings: dimension must be positive");
  if (spec.label_noise < 0.0 || spec.label_noise > 1.0) throw ConfigError("synthetic embeddings: label_noise in [0, 1]");
  const std::size_t dim = spec.dimension;
  const int k = dataset.num_classes;

  Rng directions(derive_seed({seed, 0x636C61737365ULL}));
  std::vector<std::vector<double>> centres;
  for (int c = 0; c < k; ++c) centres.push_back(unit_direction(directions, dim));

  EmbeddingStore store("synthetic", "synthetic-d" + std::to_string(dim), dim);
  const std::string config_digest = render.digest();
  for (const auto& pool : dataset.subjects) {
    Rng subject_rng(derive_seed({seed, fnv1a64(pool.subject_id)}));
    const std::vector<double> offset = unit_direction(subject_rng, dim);
    for (const auto& trial : pool.trials) {
      Rng rng(derive_seed({seed, fnv1a64(pool.subject_id), trial.trial_index(), 0x747269616CULL}));
      int shown = trial.label().value;
      if (k > 1 && rng.uniform01() < spec.label_noise) {
        shown = static_cast<int>((static_cast<std::uint64_t>(shown) + 1 + rng.bounded(static_cast<std::uint64_t>(k - 1))) %
                                 static_cast<std::uint64_t>(k));
      }
      const double noise_sd = spec.noise_scale / std::sqrt(static_cast<double>(dim));
      std::vector<float> v(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        v[d] = static_cast<float>(spec.class_scale * centres[static_cast<std::size_t>(shown)][d] +
                                  spec.subject_scale * offset[d] + noise_sd * rng.normal());
      }
      const WaveformImage image = render_fn ? render_fn(trial) : rasterize(trial, render);
      const std::string digest = image.digest();
      store.put(digest, std::move(v));
      store.index(trial.ref(), config_digest, digest);
    }
  }
  return store;
}

}  // namespace waveprompt
