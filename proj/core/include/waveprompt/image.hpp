// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace waveprompt {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend constexpr auto operator<=>(const Rgb&, const Rgb&) = default;
};

double rgb_distance(Rgb a, Rgb b);

/// 8-bit RGB raster, row-major, no alpha.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb color);  // ignores out-of-bounds writes
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> mutable_bytes() noexcept { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Throws RenderError on encoder failure.
std::vector<std::uint8_t> encode_png(const RgbImage& image);
/// Throws RenderError if the bytes are not a decodable PNG.
RgbImage decode_png(std::span<const std::uint8_t> png);

/// Draws `text` with a 5x7 bitmap font scaled by `scale`, top-left at (x, y).
/// Letters are upper-cased; unsupported glyphs advance without drawing.
void draw_text(RgbImage& image, int x, int y, std::string_view text, int scale, Rgb color);
/// Pixel extent of `text` at `scale` as (width, height).
std::pair<int, int> text_extent(std::string_view text, int scale);

}  // namespace waveprompt
