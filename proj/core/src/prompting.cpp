// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "waveprompt/digest.hpp"
#include "waveprompt/error.hpp"

#ifndef WAVEPROMPT_DEFAULT_TEMPLATE_DIR
#define WAVEPROMPT_DEFAULT_TEMPLATE_DIR "templates"
#endif

namespace waveprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PromptError("cannot read template " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string fill(const std::string& text, const std::vector<std::string>& class_names, std::size_t num_examples) {
  std::string joined;
  for (std::size_t i = 0; i < class_names.size(); ++i) joined += (i ? ", " : "") + class_names[i];
  return trim(replace_all(replace_all(text, "{class_names}", joined), "{num_examples}", std::to_string(num_examples)));
}

bool is_word_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) != 0 || ch == '-' || ch == '_';
}

std::optional<int> class_index(std::string_view name, const std::vector<std::string>& class_names) {
  const std::string u = upper(name);
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (upper(class_names[i]) == u) return static_cast<int>(i);
  }
  return std::nullopt;
}

/// Class named on a "DECISION: <name>" line, tolerating markdown emphasis and
/// trailing punctuation around the name.
std::optional<int> decision_line(std::string_view line, const std::vector<std::string>& class_names) {
  std::string s = trim(line);
  const auto strip = [](std::string& t) {
    const auto junk = " \t*_`\"'.!#>";
    const auto b = t.find_first_not_of(junk);
    if (b == std::string::npos) {
      t.clear();
      return;
    }
    t = t.substr(b, t.find_last_not_of(junk) - b + 1);
  };
  strip(s);
  const std::string u = upper(s);
  if (u.rfind(kDecisionToken, 0) != 0) return std::nullopt;
  std::string rest = s.substr(kDecisionToken.size());
  strip(rest);
  if (rest.empty() || rest.front() != ':') return std::nullopt;
  rest.erase(0, 1);
  strip(rest);
  return class_index(rest, class_names);
}

}  // namespace

std::string_view to_string(PromptTier tier) {
  switch (tier) {
    case PromptTier::Base:
      return "base";
    case PromptTier::Reasoning:
      return "reasoning";
    case PromptTier::ReasoningExamples:
      return "reasoning-examples";
  }
  return "unknown";
}

PromptTier parse_prompt_tier(std::string_view text) {
  if (text == "base") return PromptTier::Base;
  if (text == "reasoning") return PromptTier::Reasoning;
  if (text == "reasoning-examples" || text == "reasoning+examples") return PromptTier::ReasoningExamples;
  throw ConfigError("unknown prompt tier '" + std::string(text) + "' (expected base, reasoning or reasoning-examples)");
}

std::string PromptTemplates::version() const {
  Sha256 h;
  for (const auto* t : {&task_description, &diagnostic_criteria, &analysis_protocol, &output_constraints}) {
    h.update_u64(t->size()).update(*t);
  }
  return h.hex_digest();
}

PromptTemplates PromptTemplates::load(const fs::path& directory) {
  PromptTemplates t;
  t.task_description = read_text(directory / "task_description.txt");
  t.diagnostic_criteria = read_text(directory / "diagnostic_criteria.txt");
  t.analysis_protocol = read_text(directory / "analysis_protocol.txt");
  t.output_constraints = read_text(directory / "output_constraints.txt");
  return t;
}

fs::path default_template_dir() {
  if (const char* env = std::getenv("WAVEPROMPT_TEMPLATE_DIR"); env != nullptr && *env != '\0') return env;
  const fs::path source_tree = WAVEPROMPT_DEFAULT_TEMPLATE_DIR;
  if (fs::is_directory(source_tree)) return source_tree;
  return WAVEPROMPT_INSTALLED_TEMPLATE_DIR;
}

std::vector<std::string> default_class_names(int num_classes) {
  if (num_classes == 2) return {"NON-SEIZURE", "SEIZURE"};
  std::vector<std::string> names;
  for (int k = 0; k < num_classes; ++k) names.push_back("CLASS-" + std::to_string(k));
  return names;
}

void PromptConfig::normalize() {
  for (auto& n : class_names) n = upper(trim(n));
}

void PromptConfig::validate() const {
  if (class_names.size() < 2) throw ConfigError("prompt: at least two class names are required");
  std::set<std::string> seen;
  for (const auto& n : class_names) {
    if (n.empty()) throw ConfigError("prompt: empty class name");
    if (n != upper(n)) throw ConfigError("prompt: class name '" + n + "' is not uppercase");
    if (n.find_first_of(" \t\r\n:") != std::string::npos) {
      throw ConfigError("prompt: class name '" + n + "' contains whitespace or ':'");
    }
    if (n == kDecisionToken) throw ConfigError("prompt: class name collides with reserved token DECISION");
    if (!seen.insert(n).second) throw ConfigError("prompt: duplicate class name '" + n + "'");
  }
}

PromptPart PromptPart::make_text(std::string text) {
  PromptPart p;
  p.kind = Kind::Text;
  p.text = std::move(text);
  return p;
}

PromptPart PromptPart::make_image(std::vector<std::uint8_t> png, std::string role, TrialRef source) {
  PromptPart p;
  p.kind = Kind::Image;
  p.png = std::move(png);
  p.role = std::move(role);
  p.source = std::move(source);
  return p;
}

std::size_t PromptBundle::image_count() const {
  return static_cast<std::size_t>(
      std::count_if(parts.begin(), parts.end(), [](const PromptPart& p) { return p.kind == PromptPart::Kind::Image; }));
}

std::size_t PromptBundle::query_part() const {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].kind == PromptPart::Kind::Image && parts[i].role == "query") {
      if (found) throw PromptError("bundle has more than one query image");
      found = i;
    }
  }
  if (!found) throw PromptError("bundle has no query image");
  return *found;
}

std::string PromptBundle::compute_digest() const {
  Sha256 h;
  h.update("waveprompt-bundle/1").update_u64(parts.size());
  for (const auto& p : parts) {
    if (p.kind == PromptPart::Kind::Text) {
      h.update("T").update_u64(p.text.size()).update(p.text);
    } else {
      h.update("I").update_u64(p.role.size()).update(p.role).update_u64(p.png.size()).update(p.png);
    }
  }
  return h.hex_digest();
}

std::string PromptBundle::to_json() const {
  json j;
  j["format"] = "waveprompt-bundle/1";
  j["tier"] = to_string(tier);
  j["class_names"] = class_names;
  j["template_version"] = template_version;
  j["digest"] = digest;
  if (query) j["query"] = {{"subject_id", query->subject_id}, {"trial_index", query->trial_index}};
  j["support"] = json::array();
  for (const auto& e : support) {
    j["support"].push_back({{"subject_id", e.source.subject_id},
                            {"trial_index", e.source.trial_index},
                            {"label", e.label.value},
                            {"score", e.selection_score ? json(*e.selection_score) : json(nullptr)}});
  }
  j["parts"] = json::array();
  for (const auto& p : parts) {
    if (p.kind == PromptPart::Kind::Text) {
      j["parts"].push_back({{"type", "text"}, {"text", p.text}});
    } else {
      json jp{{"type", "image"}, {"role", p.role}, {"png_base64", base64_encode(p.png)}};
      if (p.source) jp["source"] = {{"subject_id", p.source->subject_id}, {"trial_index", p.source->trial_index}};
      j["parts"].push_back(std::move(jp));
    }
  }
  return j.dump(2);
}

PromptBundle PromptBundle::from_json(const std::string& text) {
  PromptBundle b;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "waveprompt-bundle/1") throw PromptError("not a prompt bundle document");
    b.tier = parse_prompt_tier(j.at("tier").get<std::string>());
    b.class_names = j.at("class_names").get<std::vector<std::string>>();
    b.template_version = j.value("template_version", "");
    b.digest = j.at("digest").get<std::string>();
    if (j.contains("query")) {
      b.query = TrialRef{j["query"].at("subject_id").get<std::string>(), j["query"].at("trial_index").get<std::uint32_t>()};
    }
    for (const auto& e : j.value("support", json::array())) {
      SupportEntry s;
      s.source = {e.at("subject_id").get<std::string>(), e.at("trial_index").get<std::uint32_t>()};
      s.label = ClassLabel{e.at("label").get<int>()};
      if (!e.at("score").is_null()) s.selection_score = e["score"].get<double>();
      b.support.push_back(std::move(s));
    }
    for (const auto& p : j.at("parts")) {
      const auto type = p.at("type").get<std::string>();
      if (type == "text") {
        b.parts.push_back(PromptPart::make_text(p.at("text").get<std::string>()));
      } else if (type == "image") {
        PromptPart part;
        part.kind = PromptPart::Kind::Image;
        part.role = p.at("role").get<std::string>();
        part.png = base64_decode(p.at("png_base64").get<std::string>());
        if (p.contains("source")) {
          part.source = TrialRef{p["source"].at("subject_id").get<std::string>(),
                                 p["source"].at("trial_index").get<std::uint32_t>()};
        }
        b.parts.push_back(std::move(part));
      } else {
        throw PromptError("unknown part type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw PromptError(std::string("malformed prompt bundle: ") + e.what());
  }
  if (b.compute_digest() != b.digest) throw PromptError("prompt bundle digest does not match its parts");
  return b;
}

PromptBundle build_prompt(const PromptConfig& config, const SupportSet* support, const WaveformImage& test) {
  config.validate();
  const bool with_examples = config.tier == PromptTier::ReasoningExamples;
  if (with_examples && support == nullptr) throw PromptError("tier reasoning-examples requires a support set");

  PromptBundle b;
  b.tier = config.tier;
  b.class_names = config.class_names;
  b.template_version = config.templates.version();
  b.query = test.source;

  const std::size_t num_examples = with_examples ? support->entries.size() : 0;
  const auto add_text = [&](const std::string& t) {
    const std::string filled = fill(t, config.class_names, num_examples);
    if (!filled.empty()) b.parts.push_back(PromptPart::make_text(filled));
  };

  add_text(config.templates.task_description);
  if (config.tier != PromptTier::Base) {
    add_text(config.templates.diagnostic_criteria);
    add_text(config.templates.analysis_protocol);
  }
  if (with_examples) {
    for (const auto& e : support->entries) {
      if (e.label.value < 0 || static_cast<std::size_t>(e.label.value) >= config.class_names.size()) {
        throw PromptError("support entry label " + std::to_string(e.label.value) + " has no class name");
      }
      if (!e.image) throw PromptError("support entry has no rendered image (call attach_images first)");
      const std::string& name = config.class_names[static_cast<std::size_t>(e.label.value)];
      b.parts.push_back(PromptPart::make_text(std::string(kExampleLabelPrefix) + name));
      b.parts.push_back(PromptPart::make_image(e.image->png_bytes, "example:" + name, e.source));
      SupportEntry ref = e;
      ref.image.reset();
      b.support.push_back(std::move(ref));
    }
  }
  b.parts.push_back(PromptPart::make_text(std::string(kQueryLabel)));
  b.parts.push_back(PromptPart::make_image(test.png_bytes, "query", test.source));
  add_text(config.templates.output_constraints);
  b.digest = b.compute_digest();
  return b;
}

Decision parse_decision(std::string_view response, const std::vector<std::string>& class_names) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= response.size()) {
    const auto nl = response.find('\n', start);
    const auto end = nl == std::string_view::npos ? response.size() : nl;
    lines.push_back(response.substr(start, end - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (auto k = decision_line(*it, class_names)) return ClassLabel{*k};
  }

  const std::string tail =
      upper(response.size() > kFallbackWindow ? response.substr(response.size() - kFallbackWindow) : response);
  std::optional<int> found;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    const std::string name = upper(class_names[k]);
    if (name.empty()) continue;
    bool present = false;
    for (auto pos = tail.find(name); pos != std::string::npos && !present; pos = tail.find(name, pos + 1)) {
      const bool left = pos == 0 || !is_word_char(tail[pos - 1]);
      const bool right = pos + name.size() == tail.size() || !is_word_char(tail[pos + name.size()]);
      present = left && right;
    }
    if (!present) continue;
    if (found) return ParseFailure{std::string(response)};
    found = static_cast<int>(k);
  }
  if (found) return ClassLabel{*found};
  return ParseFailure{std::string(response)};
}

}  // namespace waveprompt
