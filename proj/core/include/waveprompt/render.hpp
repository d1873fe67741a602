// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/image.hpp"

namespace waveprompt {

enum class Normalizer { Mad, None };
enum class PaletteMode { MachineSeparable, HumanPerceptual };

inline constexpr double kMadEpsilon = 1e-8;

/// Parameters of the stacked waveform plot. Channel c at time t lands at
///
///   y = top_margin + alpha * Norm(x[c][t]) + delta * c,   top_margin = delta / 2
///
/// with channel 0 at the top. Amplitudes are not clipped.
struct RenderConfig {
  double alpha = 28.0;
  double delta = 44.0;
  int width_px = 896;
  int height_px = 896;
  int stroke_px = 2;
  /// Explicit per-channel colors, cycled when shorter than C. Empty means
  /// channel_palette(C, palette_mode).
  std::vector<Rgb> palette;
  PaletteMode palette_mode = PaletteMode::MachineSeparable;
  Rgb background{255, 255, 255};
  bool draw_labels = true;
  int label_font_px = 14;
  Normalizer normalizer = Normalizer::Mad;

  double top_margin() const noexcept { return delta / 2.0; }

  /// Checks scalar invariants. Channel-count dependent checks happen in
  /// validate_for().
  void validate() const;
  void validate_for(std::size_t channels) const;

  /// Colors actually used for `channels` channels.
  std::vector<Rgb> resolve_palette(std::size_t channels) const;

  /// Hex SHA-256 of the canonical JSON form.
  std::string digest() const;
  std::string to_json() const;
  static RenderConfig from_json(const std::string& text);
  static RenderConfig load(const std::filesystem::path& file);
};

/// Deterministic, encoded stacked waveform plot of one trial.
struct WaveformImage {
  std::vector<std::uint8_t> png_bytes;
  int width_px = 0;
  int height_px = 0;
  TrialRef source;
  std::string config_digest;

  /// Hex SHA-256 of png_bytes; the content address used by embedding stores.
  std::string digest() const;
};

/// (x - median) / (MAD + eps) for Mad; identity for None.
std::vector<double> normalize_channel(std::span<const float> samples, Normalizer normalizer);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct TrialLayout {
  std::vector<std::vector<Point>> polylines;  // one per channel
  std::vector<double> baselines;              // y of Norm == 0 per channel
};

/// Maps every sample to image coordinates. Throws ConfigError if the image is
/// too short for the stack.
TrialLayout layout_trial(const EegTrial& trial, const RenderConfig& config);

/// MachineSeparable starts from cyan, red, mid-grey and greedily picks each
/// next color to be far in RGB from its neighbour; HumanPerceptual cycles a
/// fixed 20-color qualitative map.
std::vector<Rgb> channel_palette(std::size_t channels, PaletteMode mode);

/// Label box for channel c: directly above its baseline, left-aligned.
struct LabelBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;  // exclusive
};
std::vector<LabelBox> label_boxes(const EegTrial& trial, const RenderConfig& config);

/// Raw raster of the plot, before PNG encoding.
RgbImage render_pixels(const EegTrial& trial, const RenderConfig& config);

WaveformImage rasterize(const EegTrial& trial, const RenderConfig& config);

}  // namespace waveprompt
