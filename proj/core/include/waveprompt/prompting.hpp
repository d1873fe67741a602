// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/render.hpp"
#include "waveprompt/retrieval.hpp"

namespace waveprompt {

enum class PromptTier { Base, Reasoning, ReasoningExamples };

std::string_view to_string(PromptTier tier);
/// "base", "reasoning", "reasoning-examples".
PromptTier parse_prompt_tier(std::string_view text);

/// The four template texts. Placeholders: {class_names}, {num_examples}.
struct PromptTemplates {
  std::string task_description;
  std::string diagnostic_criteria;
  std::string analysis_protocol;
  std::string output_constraints;

  /// Hex SHA-256 over the four texts; recorded in every report.
  std::string version() const;

  /// Reads task_description.txt, diagnostic_criteria.txt,
  /// analysis_protocol.txt and output_constraints.txt.
  static PromptTemplates load(const std::filesystem::path& directory);
};

/// $WAVEPROMPT_TEMPLATE_DIR if set, else the source-tree templates when present,
/// else the installed copy under <datadir>/waveprompt/templates.
std::filesystem::path default_template_dir();

/// {"NON-SEIZURE", "SEIZURE"} for K = 2, "CLASS-0".. otherwise.
std::vector<std::string> default_class_names(int num_classes);

struct PromptConfig {
  PromptTier tier = PromptTier::ReasoningExamples;
  PromptTemplates templates;
  std::vector<std::string> class_names = default_class_names(2);

  /// Uppercases class names, then rejects duplicates, empty names, names with
  /// whitespace or ':' and the reserved token DECISION.
  void normalize();
  void validate() const;
};

struct PromptPart {
  enum class Kind { Text, Image };

  Kind kind = Kind::Text;
  std::string text;                   // Text
  std::vector<std::uint8_t> png;      // Image
  std::string role;                   // Image: "example:<CLASS>" or "query"
  std::optional<TrialRef> source;     // Image

  static PromptPart make_text(std::string text);
  static PromptPart make_image(std::vector<std::uint8_t> png, std::string role, TrialRef source);
};

struct PromptBundle {
  std::vector<PromptPart> parts;
  PromptTier tier = PromptTier::Base;
  std::vector<std::string> class_names;
  std::string template_version;
  /// Selected support set by reference (empty below ReasoningExamples).
  std::vector<SupportEntry> support;
  std::optional<TrialRef> query;
  std::string digest;

  std::size_t image_count() const;
  /// Index into parts of the single "query" image.
  std::size_t query_part() const;

  /// Hex SHA-256 over the typed, length-prefixed parts in order.
  std::string compute_digest() const;

  std::string to_json() const;
  /// Throws PromptError when the stored digest does not match the parts.
  static PromptBundle from_json(const std::string& text);
};

inline constexpr std::string_view kDecisionToken = "DECISION";
inline constexpr std::string_view kExampleLabelPrefix = "Example — class: ";
inline constexpr std::string_view kQueryLabel = "Test trial:";

/// Part order: task description; criteria and protocol (Reasoning tiers);
/// one label line plus image per support entry (ReasoningExamples); the
/// query label and image; output constraints.
PromptBundle build_prompt(const PromptConfig& config, const SupportSet* support, const WaveformImage& test);

struct ParseFailure {
  std::string raw_text;
};

using Decision = std::variant<ClassLabel, ParseFailure>;

inline bool is_failure(const Decision& d) { return std::holds_alternative<ParseFailure>(d); }

/// The last line of the form "DECISION: <name>" (case-insensitive) wins.
/// Otherwise, if exactly one class name appears as a whole token in the final
/// 200 characters, that class. Otherwise ParseFailure.
Decision parse_decision(std::string_view response, const std::vector<std::string>& class_names);

inline constexpr std::size_t kFallbackWindow = 200;

}  // namespace waveprompt
