// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

// Regenerates tests/data/golden_renders.tsv and writes each case as a PNG
// into the given directory for review.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "golden.hpp"
#include "waveprompt/image.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::path("golden_renders");
  fs::create_directories(out_dir);
  std::ofstream table(waveprompt::golden::table_path());
  table << "# name\tsha256 over (width, height, RGB rows)\n";
  for (const auto& c : waveprompt::golden::cases()) {
    const auto pixels = waveprompt::render_pixels(c.trial, c.config);
    const auto png = waveprompt::encode_png(pixels);
    std::ofstream(out_dir / (c.name + ".png"), std::ios::binary)
        .write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    table << c.name << '\t' << waveprompt::golden::pixel_checksum(pixels) << '\n';
    std::cout << c.name << '\n';
  }
  return 0;
}
