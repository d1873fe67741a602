// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed render cases whose pixel checksums are pinned in
// tests/data/golden_renders.tsv.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/digest.hpp"
#include "waveprompt/render.hpp"

namespace waveprompt::golden {

struct Case {
  std::string name;
  EegTrial trial;
  RenderConfig config;
};

/// SHA-256 over width, height and the raw RGB rows.
inline std::string pixel_checksum(const RgbImage& image) {
  Sha256 h;
  h.update_u64(static_cast<std::uint64_t>(image.width()));
  h.update_u64(static_cast<std::uint64_t>(image.height()));
  h.update(image.bytes());
  return h.hex_digest();
}

inline std::vector<Case> cases() {
  SynthSpec spec;
  spec.num_subjects = 2;
  spec.trials_per_class = {4, 4};
  spec.channels = 18;
  spec.sampling_rate = 64.0;
  spec.trial_duration_s = 2.0;
  const DatasetManifest data = synthesize_dataset(spec, 2026);
  const auto& s1 = data.subjects[0].trials;
  const auto& s2 = data.subjects[1].trials;

  auto sine = [](std::size_t channels) {
    SampleMatrix m(channels, 96);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < 96; ++t) {
        m.at(c, t) = static_cast<float>(std::sin(0.2 * static_cast<double>(t) + static_cast<double>(c)));
      }
    }
    auto names = std::make_shared<const std::vector<std::string>>(default_channel_names(channels));
    return EegTrial("G", static_cast<std::uint32_t>(channels), ClassLabel{0}, 48.0, names, std::move(m));
  };

  RenderConfig base;
  RenderConfig small;
  small.width_px = 320;
  small.height_px = 200;
  small.delta = 40.0;
  small.alpha = 8.0;
  small.label_font_px = 7;

  std::vector<Case> out;
  out.push_back({"default_nontask", s1.front(), base});
  out.push_back({"default_task", s1.back(), base});
  {
    RenderConfig c = base;
    c.palette_mode = PaletteMode::HumanPerceptual;
    out.push_back({"human_palette", s2.front(), c});
  }
  {
    RenderConfig c = base;
    c.draw_labels = false;
    c.stroke_px = 1;
    out.push_back({"thin_unlabelled", s2.back(), c});
  }
  {
    RenderConfig c = base;
    c.stroke_px = 3;
    c.alpha = 12.0;
    c.background = {16, 16, 16};
    out.push_back({"thick_dark", s2[2], c});
  }
  out.push_back({"sine_c1", sine(1), small});
  out.push_back({"sine_c3", sine(3), small});
  {
    RenderConfig c = small;
    c.normalizer = Normalizer::None;
    c.alpha = 15.0;
    out.push_back({"sine_c4_raw", sine(4), c});
  }
  {
    RenderConfig c = small;
    c.palette = {{0, 0, 0}, {200, 0, 120}};
    out.push_back({"sine_c4_palette", sine(4), c});
  }
  {
    RenderConfig c = small;
    c.width_px = 97;
    c.height_px = 97;
    c.delta = 16.0;
    c.draw_labels = false;
    out.push_back({"sine_c5_tiny", sine(5), c});
  }
  return out;
}

inline std::filesystem::path table_path() { return std::filesystem::path(WAVEPROMPT_TEST_DATA) / "golden_renders.tsv"; }

/// name -> checksum.
inline std::map<std::string, std::string> load_table() {
  std::map<std::string, std::string> out;
  std::ifstream in(table_path());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string name;
    std::string sum;
    row >> name >> sum;
    out[name] = sum;
  }
  return out;
}

}  // namespace waveprompt::golden
