// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli_config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "waveprompt/digest.hpp"

namespace waveprompt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json parse_rgb(const std::string& text, const std::string& flag) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw UsageError(flag + ": expected r,g,b, got '" + text + "'");
  json rgb = json::array();
  for (const auto& p : parts) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(p, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != p.size() || v < 0 || v > 255) throw UsageError(flag + ": bad color component '" + p + "'");
    rgb.push_back(v);
  }
  return rgb;
}

void walk(const json& node, const std::string& prefix, std::vector<std::string>& out) {
  if (node.is_object() && !node.empty()) {
    for (const auto& [key, child] : node.items()) walk(child, prefix + "/" + key, out);
  } else {
    out.push_back(prefix);
  }
}

}  // namespace

std::string env_name(const std::string& flag) {
  std::string out = "WAVEPROMPT_";
  for (char ch : flag.substr(flag.find_first_not_of('-'))) {
    out += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return out;
}

json convert(const Setting& setting, const std::string& raw) {
  const std::string& f = setting.flag;
  try {
    std::size_t used = 0;
    switch (setting.kind) {
      case ValueKind::String:
        return raw;
      case ValueKind::Int: {
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case ValueKind::UInt: {
        if (!raw.empty() && raw[0] == '-') break;
        const unsigned long long v = std::stoull(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case ValueKind::Number: {
        const double v = std::stod(raw, &used);
        if (used != raw.size()) break;
        return v;
      }
      case ValueKind::Bool: {
        std::string s;
        for (char ch : raw) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
        if (s == "0" || s == "false" || s == "no" || s == "off") return false;
        break;
      }
      case ValueKind::List:
        return split(raw, ',');
      case ValueKind::IntList: {
        json list = json::array();
        for (const auto& item : split(raw, ',')) {
          const long long v = std::stoll(item, &used);
          if (used != item.size() || v < 0) throw UsageError(f + ": invalid count '" + item + "'");
          list.push_back(v);
        }
        return list;
      }
      case ValueKind::JsonFile: {
        std::ifstream in(raw);
        if (!in) throw UsageError(f + ": cannot read " + raw);
        try {
          return json::parse(in);
        } catch (const json::exception& e) {
          throw UsageError(f + ": " + raw + " is not valid JSON (" + e.what() + ")");
        }
      }
      case ValueKind::Rgb:
        return parse_rgb(raw, f);
      case ValueKind::RgbList: {
        json list = json::array();
        for (const auto& c : split(raw, ';')) list.push_back(parse_rgb(c, f));
        return list;
      }
    }
  } catch (const std::invalid_argument&) {
  } catch (const std::out_of_range&) {
  }
  throw UsageError(f + ": invalid value '" + raw + "'");
}

std::vector<Setting> render_settings() {
  using K = ValueKind;
  return {
      {"--render-config", "/render", K::JsonFile, "render config JSON file"},
      {"--alpha", "/render/alpha", K::Number, "amplitude scale (px per normalized unit)"},
      {"--delta", "/render/delta", K::Number, "vertical offset between channels (px)"},
      {"--width", "/render/width_px", K::Int, "image width (px)"},
      {"--height", "/render/height_px", K::Int, "image height (px)"},
      {"--stroke", "/render/stroke_px", K::Int, "line width (px)"},
      {"--palette", "/render/palette", K::RgbList, "channel colors 'r,g,b;r,g,b;...' (empty: generated)"},
      {"--palette-mode", "/render/palette_mode", K::String, "machine-separable | human-perceptual"},
      {"--background", "/render/background", K::Rgb, "background color r,g,b"},
      {"--labels", "/render/draw_labels", K::Bool, "draw channel names (true|false)"},
      {"--label-font", "/render/label_font_px", K::Int, "channel name glyph height (px)"},
      {"--normalizer", "/render/normalizer", K::String, "mad | none"},
  };
}

std::vector<Setting> evaluation_settings() {
  using K = ValueKind;
  std::vector<Setting> s = {
      {"--manifest", "/manifest", K::String, "dataset manifest.json"},
      {"--shots", "/selection/shots", K::UInt, "examples per class (M)"},
      {"--strategy", "/selection/strategy", K::String, "random | anchor | rep | rep-sim"},
      {"--seed", "/selection/seed", K::UInt, "selection RNG seed"},
      {"--tier", "/prompt/tier", K::String, "base | reasoning | reasoning-examples"},
      {"--class-names", "/prompt/class_names", K::List, "comma-separated class names, class 0 first"},
      {"--template-dir", "/prompt/template_dir", K::String, "prompt template directory"},
      {"--backend", "/backend", K::JsonFile, "backend config JSON file"},
      {"--backend-kind", "/backend/kind", K::String, "remote-chat | mock"},
      {"--endpoint", "/backend/endpoint", K::String, "chat-completions URL"},
      {"--model", "/backend/model", K::String, "model name"},
      {"--api-key-env", "/backend/api_key_env", K::String, "environment variable holding the API key"},
      {"--temperature", "/backend/temperature", K::Number, "sampling temperature (non-zero needs --allow-nonzero-temperature)"},
      {"--allow-nonzero-temperature", "/backend/allow_nonzero_temperature", K::Bool, "audit flag for temperature != 0"},
      {"--max-retries", "/backend/max_retries", K::Int, "retries on 429/5xx/transport errors"},
      {"--rpm", "/backend/requests_per_minute", K::Int, "request cap per 60 s window (0: none)"},
      {"--timeout", "/backend/timeout_s", K::Number, "request timeout (s)"},
      {"--backoff-initial", "/backend/backoff_initial_s", K::Number, "first retry delay (s)"},
      {"--backoff-max", "/backend/backoff_max_s", K::Number, "retry delay cap (s)"},
      {"--max-in-flight", "/backend/max_in_flight", K::UInt, "concurrent backend requests"},
      {"--max-tokens", "/backend/max_tokens", K::Int, "completion token limit"},
      {"--provider", "/embedding/provider", K::String, "embedding provider: file | http"},
      {"--store", "/embedding/store", K::String, "embedding store directory"},
      {"--embed-url", "/embedding/url", K::String, "embedding service base URL"},
      {"--embed-timeout", "/embedding/timeout_s", K::Number, "embedding request timeout (s)"},
      {"--downsample", "/downsample", K::String, "none | every-nth-all:N | every-nth-of-class:N:c1,c2"},
      {"--parse-failure", "/parse_failure", K::String, "count-as-wrong | exclude"},
      {"--subjects", "/subjects", K::List, "comma-separated subject ids (default: all)"},
      {"--fallback-random", "/fallback_random", K::Bool, "use random selection when the history is too short"},
      {"--cache-dir", "/cache_dir", K::String, "response cache directory (default: in memory)"},
  };
  const auto r = render_settings();
  s.insert(s.begin() + 1, r.begin(), r.end());
  return s;
}

LayeredConfig::LayeredConfig(json defaults, std::vector<Setting> settings)
    : doc_(std::move(defaults)), settings_(std::move(settings)) {
  for (const auto& p : leaf_paths(doc_)) sources_[p] = "default";
  raw_.resize(settings_.size());
}

void LayeredConfig::alias(const std::string& flag, const std::string& names) { aliases_[flag] = names; }

void LayeredConfig::bind(CLI::App& app) {
  options_.clear();
  for (std::size_t i = 0; i < settings_.size(); ++i) {
    const Setting& s = settings_[i];
    const std::string help = s.help + " [env " + env_name(s.flag) + "]";
    const auto a = aliases_.find(s.flag);
    const std::string names = a == aliases_.end() ? s.flag : s.flag + "," + a->second;
    CLI::Option* opt = app.add_option(names, raw_[i], help);
    if (s.kind == ValueKind::Bool) opt->expected(0, 1);
    options_.push_back(opt);
  }
}

void LayeredConfig::assign(const std::string& path, const json& value, const std::string& source) {
  const json::json_pointer ptr(path);
  if (value.is_object()) {
    for (const auto& [key, child] : value.items()) {
      const std::string child_path = path + "/" + key;
      if (!doc_.contains(json::json_pointer(child_path))) {
        throw UsageError(source + ": unknown key " + child_path);
      }
      assign(child_path, child, source);
    }
    return;
  }
  doc_[ptr] = value;
  sources_[path] = source;
}

void LayeredConfig::apply_file(const json& file, bool strict) {
  if (!file.is_object()) throw UsageError("--config: top level must be an object");
  for (const auto& [key, value] : file.items()) {
    const std::string path = "/" + key;
    if (!doc_.contains(json::json_pointer(path))) {
      if (strict) throw UsageError("--config: unknown key '" + key + "'");
      spdlog::debug("config file key '{}' not used by this subcommand", key);
      continue;
    }
    assign(path, value, "file");
  }
}

void LayeredConfig::apply_environment() {
  for (const auto& s : settings_) {
    const std::string name = env_name(s.flag);
    const char* v = std::getenv(name.c_str());
    if (v == nullptr || *v == '\0') continue;
    if (!doc_.contains(json::json_pointer(s.path))) continue;
    assign(s.path, convert(s, v), "env:" + name);
  }
}

void LayeredConfig::apply_flags() {
  for (std::size_t i = 0; i < settings_.size(); ++i) {
    if (i >= options_.size() || options_[i]->count() == 0) continue;
    const Setting& s = settings_[i];
    const std::string raw = s.kind == ValueKind::Bool && raw_[i].empty() ? "true" : raw_[i];
    assign(s.path, convert(s, raw), "flag " + s.flag);
  }
}

void LayeredConfig::log_sources() const {
  for (const auto& [path, source] : sources_) {
    if (source == "default") {
      spdlog::debug("config {} = {} ({})", path, doc_[json::json_pointer(path)].dump(), source);
    } else {
      spdlog::info("config {} = {} ({})", path, doc_[json::json_pointer(path)].dump(), source);
    }
  }
}

json LayeredConfig::explicit_document() const {
  json out = json::object();
  for (const auto& [path, source] : sources_) {
    if (source == "default") continue;
    const json::json_pointer ptr(path);
    out[ptr] = doc_[ptr];
  }
  return out;
}

std::string LayeredConfig::digest() const { return sha256_hex(doc_.dump()); }

std::vector<std::string> leaf_paths(const json& doc) {
  std::vector<std::string> out;
  walk(doc, "", out);
  return out;
}

}  // namespace waveprompt::cli
