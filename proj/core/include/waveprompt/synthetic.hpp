// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

#include "waveprompt/dataset.hpp"
#include "waveprompt/embedding.hpp"
#include "waveprompt/render.hpp"

namespace waveprompt {

/// Clustered stand-in embeddings for offline runs. Each trial gets
///
///   class_scale * u[y'] + subject_scale * o[subject] + noise_scale * n
///
/// with u, o random unit directions and n ~ N(0, I/D). y' is the trial's label,
/// replaced by a different class with probability `label_noise`.
struct EmbeddingSynthSpec {
  std::size_t dimension = 32;
  double class_scale = 1.0;
  double subject_scale = 0.3;
  double noise_scale = 0.05;
  double label_noise = 0.0;
};

using RenderFn = std::function<WaveformImage(const EegTrial&)>;

/// Store keyed by the digest of each trial's render under `render`, indexed by
/// (trial, render digest). Deterministic in (dataset, render, spec, seed).
/// `render_fn` overrides rasterize() (e.g. to share a render cache).
EmbeddingStore synthesize_embeddings(const DatasetManifest& dataset, const RenderConfig& render,
                                     const EmbeddingSynthSpec& spec, std::uint64_t seed,
                                     const RenderFn& render_fn = {});

}  // namespace waveprompt
