// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <png.h>

#include <cmath>
#include <cstring>

#include "waveprompt/error.hpp"
#include "waveprompt/image.hpp"

namespace waveprompt {

double rgb_distance(Rgb a, Rgb b) {
  const double dr = double(a.r) - b.r;
  const double dg = double(a.g) - b.g;
  const double db = double(a.b) - b.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

RgbImage::RgbImage(int width, int height, Rgb fill)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3) {
  if (width <= 0 || height <= 0) throw RenderError("image dimensions must be positive");
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void RgbImage::set(int x, int y, Rgb color) {
  if (!contains(x, y)) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = color.r;
  pixels_[i + 1] = color.g;
  pixels_[i + 2] = color.b;
}

// The simplified libpng API writes no time chunk and uses fixed filter and
// compression settings, so output bytes depend only on pixels and the
// linked zlib.
std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  png_image info;
  std::memset(&info, 0, sizeof info);
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width());
  info.height = static_cast<png_uint_32>(image.height());
  info.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  const auto row_stride = static_cast<png_int_32>(image.width() * 3);
  if (!png_image_write_to_memory(&info, nullptr, &size, 0, image.bytes().data(), row_stride, nullptr)) {
    throw RenderError(std::string("png encode failed: ") + info.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&info, out.data(), &size, 0, image.bytes().data(), row_stride, nullptr)) {
    throw RenderError(std::string("png encode failed: ") + info.message);
  }
  out.resize(size);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> png) {
  png_image info;
  std::memset(&info, 0, sizeof info);
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&info, png.data(), png.size())) {
    throw RenderError(std::string("png decode failed: ") + info.message);
  }
  info.format = PNG_FORMAT_RGB;
  RgbImage image(static_cast<int>(info.width), static_cast<int>(info.height), Rgb{});
  auto* buffer = image.mutable_bytes().data();
  if (!png_image_finish_read(&info, nullptr, buffer, 0, nullptr)) {
    png_image_free(&info);
    throw RenderError(std::string("png decode failed: ") + info.message);
  }
  return image;
}

}  // namespace waveprompt
