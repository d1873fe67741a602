// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "waveprompt/digest.hpp"
#include "waveprompt/error.hpp"

namespace waveprompt {

using nlohmann::json;

namespace {

constexpr int kGlyphRows = 7;

int label_scale(const RenderConfig& config) { return std::max(1, config.label_font_px / kGlyphRows); }

json rgb_json(Rgb c) { return json::array({c.r, c.g, c.b}); }

Rgb rgb_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("color must be an [r, g, b] array");
  auto channel = [&](std::size_t i) {
    const int v = j.at(i).get<int>();
    if (v < 0 || v > 255) throw ConfigError("color component out of range: " + std::to_string(v));
    return static_cast<std::uint8_t>(v);
  };
  return {channel(0), channel(1), channel(2)};
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Clamp far-off-image coordinates so integer conversion stays defined.
double clamp_coord(double v) { return std::clamp(v, -1.0e6, 1.0e6); }

// Fills the stroke square centred on (x, y). A pixel belongs to the square
// when its centre lies in [c - s/2, c + s/2) on both axes.
void stamp(RgbImage& image, double x, double y, int stroke, Rgb color) {
  const double half = stroke / 2.0;
  const int x0 = static_cast<int>(std::ceil(clamp_coord(x) - half));
  const int y0 = static_cast<int>(std::ceil(clamp_coord(y) - half));
  const int x_end = static_cast<int>(std::ceil(clamp_coord(x) + half));
  const int y_end = static_cast<int>(std::ceil(clamp_coord(y) + half));
  for (int py = std::max(0, y0); py < std::min(image.height(), y_end); ++py) {
    for (int px = std::max(0, x0); px < std::min(image.width(), x_end); ++px) image.set(px, py, color);
  }
}

// Thick segment: step along the major axis one pixel centre at a time and
// stamp at the exactly interpolated minor coordinate. Endpoints are stamped
// too, giving square caps.
void draw_segment(RgbImage& image, Point a, Point b, int stroke, Rgb color) {
  a = {clamp_coord(a.x), clamp_coord(a.y)};
  b = {clamp_coord(b.x), clamp_coord(b.y)};
  stamp(image, a.x, a.y, stroke, color);
  stamp(image, b.x, b.y, stroke, color);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  if (std::abs(dx) >= std::abs(dy)) {
    if (dx == 0.0) return;
    const double lo = std::min(a.x, b.x);
    const double hi = std::max(a.x, b.x);
    const int start = std::max(static_cast<int>(std::ceil(lo)), -stroke);
    const int stop = std::min(static_cast<int>(std::floor(hi)), image.width() + stroke);
    for (int x = start; x <= stop; ++x) stamp(image, x, a.y + dy * ((x - a.x) / dx), stroke, color);
  } else {
    const double lo = std::min(a.y, b.y);
    const double hi = std::max(a.y, b.y);
    const int start = std::max(static_cast<int>(std::ceil(lo)), -stroke);
    const int stop = std::min(static_cast<int>(std::floor(hi)), image.height() + stroke);
    for (int y = start; y <= stop; ++y) stamp(image, a.x + dx * ((y - a.y) / dy), y, stroke, color);
  }
}

}  // namespace

// --- RenderConfig -------------------------------------------------------------

void RenderConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("render config: alpha must be > 0");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("render config: delta must be > 0");
  if (stroke_px < 1) throw ConfigError("render config: stroke_px must be >= 1");
  if (width_px < 1 || height_px < 1) throw ConfigError("render config: image dimensions must be positive");
  if (label_font_px < 1) throw ConfigError("render config: label_font_px must be >= 1");
}

void RenderConfig::validate_for(std::size_t channels) const {
  validate();
  if (channels == 0) throw ConfigError("render config: trial has no channels");
  const double needed = static_cast<double>(channels) * delta + delta;
  if (static_cast<double>(height_px) < needed) {
    throw ConfigError("render config: height_px " + std::to_string(height_px) + " cannot fit " +
                      std::to_string(channels) + " channels (needs C*delta + delta = " + std::to_string(needed) + ")");
  }
  if (draw_labels) {
    const int box = kGlyphRows * label_scale(*this);
    if (static_cast<double>(box + stroke_px) > delta / 2.0) {
      throw ConfigError("render config: label_font_px " + std::to_string(label_font_px) +
                        " does not fit between channels (delta / 2 = " + std::to_string(delta / 2.0) + ")");
    }
  }
  if (palette.size() >= channels) {
    std::set<Rgb> seen(palette.begin(), palette.end());
    if (seen.size() != palette.size()) throw ConfigError("render config: palette entries must be distinct");
  }
}

std::vector<Rgb> RenderConfig::resolve_palette(std::size_t channels) const {
  if (palette.empty()) return channel_palette(channels, palette_mode);
  std::vector<Rgb> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = palette[c % palette.size()];
  return out;
}

std::string RenderConfig::to_json() const {
  json j;
  j["alpha"] = alpha;
  j["delta"] = delta;
  j["width_px"] = width_px;
  j["height_px"] = height_px;
  j["stroke_px"] = stroke_px;
  j["palette"] = json::array();
  for (Rgb c : palette) j["palette"].push_back(rgb_json(c));
  j["palette_mode"] = palette_mode == PaletteMode::MachineSeparable ? "machine-separable" : "human-perceptual";
  j["background"] = rgb_json(background);
  j["draw_labels"] = draw_labels;
  j["label_font_px"] = label_font_px;
  j["normalizer"] = normalizer == Normalizer::Mad ? "mad" : "none";
  return j.dump();
}

std::string RenderConfig::digest() const { return sha256_hex(to_json()); }

RenderConfig RenderConfig::from_json(const std::string& text) {
  RenderConfig cfg;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("render config: expected an object");
    static const std::set<std::string> known{"alpha",      "delta",        "width_px",   "height_px",
                                             "stroke_px",  "palette",      "palette_mode", "background",
                                             "draw_labels", "label_font_px", "normalizer"};
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw ConfigError("render config: unknown key '" + key + "'");
    }
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.delta = j.value("delta", cfg.delta);
    cfg.width_px = j.value("width_px", cfg.width_px);
    cfg.height_px = j.value("height_px", cfg.height_px);
    cfg.stroke_px = j.value("stroke_px", cfg.stroke_px);
    if (j.contains("palette")) {
      for (const auto& c : j.at("palette")) cfg.palette.push_back(rgb_from_json(c));
    }
    const std::string mode = j.value("palette_mode", std::string("machine-separable"));
    if (mode == "machine-separable") {
      cfg.palette_mode = PaletteMode::MachineSeparable;
    } else if (mode == "human-perceptual") {
      cfg.palette_mode = PaletteMode::HumanPerceptual;
    } else {
      throw ConfigError("render config: unknown palette_mode '" + mode + "'");
    }
    if (j.contains("background")) cfg.background = rgb_from_json(j.at("background"));
    cfg.draw_labels = j.value("draw_labels", cfg.draw_labels);
    cfg.label_font_px = j.value("label_font_px", cfg.label_font_px);
    const std::string norm = j.value("normalizer", std::string("mad"));
    if (norm == "mad") {
      cfg.normalizer = Normalizer::Mad;
    } else if (norm == "none") {
      cfg.normalizer = Normalizer::None;
    } else {
      throw ConfigError("render config: unknown normalizer '" + norm + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("render config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RenderConfig RenderConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read render config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string WaveformImage::digest() const { return sha256_hex(png_bytes); }

// --- normalisation and layout -------------------------------------------------

std::vector<double> normalize_channel(std::span<const float> samples, Normalizer normalizer) {
  std::vector<double> out(samples.begin(), samples.end());
  if (normalizer == Normalizer::None || out.empty()) return out;
  const double med = median_of(out);
  std::vector<double> dev(out.size());
  std::transform(out.begin(), out.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
  const double scale = median_of(std::move(dev)) + kMadEpsilon;
  for (double& v : out) v = (v - med) / scale;
  return out;
}

TrialLayout layout_trial(const EegTrial& trial, const RenderConfig& config) {
  config.validate_for(trial.channels());
  const SampleMatrix& m = trial.samples();
  const std::size_t length = m.length();
  const double x_step = length > 1 ? static_cast<double>(config.width_px - 1) / static_cast<double>(length - 1) : 0.0;

  TrialLayout layout;
  layout.polylines.resize(m.channels());
  layout.baselines.resize(m.channels());
  for (std::size_t c = 0; c < m.channels(); ++c) {
    const double baseline = config.top_margin() + config.delta * static_cast<double>(c);
    layout.baselines[c] = baseline;
    const auto norm = normalize_channel(m.row(c), config.normalizer);
    auto& line = layout.polylines[c];
    line.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
      line[t] = {static_cast<double>(t) * x_step, config.alpha * norm[t] + baseline};
    }
  }
  return layout;
}

std::vector<Rgb> channel_palette(std::size_t channels, PaletteMode mode) {
  std::vector<Rgb> out;
  out.reserve(channels);
  if (mode == PaletteMode::HumanPerceptual) {
    static constexpr std::array<Rgb, 20> kQualitative = {{
        {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},   {148, 103, 189},
        {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207},
        {174, 199, 232}, {255, 187, 120}, {152, 223, 138}, {255, 152, 150}, {197, 176, 213},
        {196, 156, 148}, {247, 182, 210}, {199, 199, 199}, {219, 219, 141}, {158, 218, 229},
    }};
    for (std::size_t c = 0; c < channels; ++c) out.push_back(kQualitative[c % kQualitative.size()]);
    return out;
  }

  static constexpr std::array<Rgb, 3> kSeed = {{{0, 255, 255}, {255, 0, 0}, {122, 122, 122}}};
  static const std::vector<Rgb> kCandidates = [] {
    constexpr std::array<std::uint8_t, 5> kLevels = {0, 64, 128, 192, 255};
    std::vector<Rgb> v;
    for (auto r : kLevels) {
      for (auto g : kLevels) {
        for (auto b : kLevels) {
          const Rgb c{r, g, b};
          if (rgb_distance(c, Rgb{255, 255, 255}) >= 110.0) v.push_back(c);  // keep off a white background
        }
      }
    }
    return v;
  }();
  constexpr double kAdjacentFloor = 160.0;
  constexpr std::size_t kRecent = 4;

  for (std::size_t c = 0; c < channels; ++c) {
    if (c < kSeed.size()) {
      out.push_back(kSeed[c]);
      continue;
    }
    const Rgb prev = out.back();
    const Rgb* best = nullptr;
    double best_recent = -1.0;
    double best_prev = -1.0;
    bool best_meets_floor = false;
    for (const Rgb& cand : kCandidates) {
      if (std::find(out.begin(), out.end(), cand) != out.end()) continue;
      const double d_prev = rgb_distance(cand, prev);
      double d_recent = d_prev;
      for (std::size_t k = 1; k <= std::min(kRecent, out.size()); ++k) {
        d_recent = std::min(d_recent, rgb_distance(cand, out[out.size() - k]));
      }
      const bool meets = d_prev >= kAdjacentFloor;
      const bool better = best == nullptr || (meets && !best_meets_floor) ||
                          (meets == best_meets_floor &&
                           (d_recent > best_recent || (d_recent == best_recent && d_prev > best_prev)));
      if (better) {
        best = &cand;
        best_recent = d_recent;
        best_prev = d_prev;
        best_meets_floor = meets;
      }
    }
    // Candidates exhausted (more than ~100 channels): cycle.
    out.push_back(best != nullptr ? *best : out[c % out.size()]);
  }
  return out;
}

std::vector<LabelBox> label_boxes(const EegTrial& trial, const RenderConfig& config) {
  const int scale = label_scale(config);
  std::vector<LabelBox> boxes;
  boxes.reserve(trial.channels());
  for (std::size_t c = 0; c < trial.channels(); ++c) {
    const double baseline = config.top_margin() + config.delta * static_cast<double>(c);
    const auto [w, h] = text_extent(trial.channel_names()[c], scale);
    const int y1 = static_cast<int>(std::floor(baseline)) - config.stroke_px;
    boxes.push_back({0, y1 - h, w, y1});
  }
  return boxes;
}

RgbImage render_pixels(const EegTrial& trial, const RenderConfig& config) {
  const TrialLayout layout = layout_trial(trial, config);
  const std::vector<Rgb> colors = config.resolve_palette(trial.channels());
  RgbImage image(config.width_px, config.height_px, config.background);
  for (std::size_t c = 0; c < layout.polylines.size(); ++c) {
    const auto& line = layout.polylines[c];
    if (line.size() == 1) {
      stamp(image, line[0].x, line[0].y, config.stroke_px, colors[c]);
      continue;
    }
    for (std::size_t t = 1; t < line.size(); ++t) draw_segment(image, line[t - 1], line[t], config.stroke_px, colors[c]);
  }
  if (config.draw_labels) {
    const auto boxes = label_boxes(trial, config);
    for (std::size_t c = 0; c < boxes.size(); ++c) {
      draw_text(image, boxes[c].x0, boxes[c].y0, trial.channel_names()[c], label_scale(config), colors[c]);
    }
  }
  return image;
}

WaveformImage rasterize(const EegTrial& trial, const RenderConfig& config) {
  WaveformImage out;
  out.png_bytes = encode_png(render_pixels(trial, config));
  out.width_px = config.width_px;
  out.height_px = config.height_px;
  out.source = trial.ref();
  out.config_digest = config.digest();
  return out;
}

}  // namespace waveprompt
