// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace waveprompt::cli {

using nlohmann::json;

/// Bad command-line input; the CLI exits with status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ValueKind { String, Int, UInt, Number, Bool, List, IntList, JsonFile, Rgb, RgbList };

/// One configuration key reachable from a flag and an environment variable.
struct Setting {
  std::string flag;  // "--strategy"
  std::string path;  // JSON pointer into the resolved document, "/selection/strategy"
  ValueKind kind = ValueKind::String;
  std::string help;
};

/// WAVEPROMPT_<FLAG>, e.g. --max-retries -> WAVEPROMPT_MAX_RETRIES.
std::string env_name(const std::string& flag);

/// Converts a raw flag or environment string to JSON. Throws UsageError.
json convert(const Setting& setting, const std::string& raw);

/// Settings shared by every subcommand that renders.
std::vector<Setting> render_settings();
/// Settings covering every leaf of the evaluation config.
std::vector<Setting> evaluation_settings();

/// Resolves a document from defaults < config file < environment < flags and
/// remembers which layer set each leaf.
class LayeredConfig {
 public:
  LayeredConfig(json defaults, std::vector<Setting> settings);

  /// Extra CLI names for a setting, e.g. alias("--render-config", "--config").
  /// Call before bind().
  void alias(const std::string& flag, const std::string& names);
  /// Registers one option per setting on `app`.
  void bind(CLI::App& app);

  /// `strict`: config-file keys outside the defaults are an error; otherwise
  /// they are ignored.
  void apply_file(const json& file, bool strict);
  void apply_environment();
  void apply_flags();

  /// Sets one value (objects are merged leaf by leaf) and records its source.
  void assign(const std::string& path, const json& value, const std::string& source);

  const json& document() const noexcept { return doc_; }
  /// The document restricted to leaves that some layer set explicitly.
  json explicit_document() const;
  /// Leaf path -> "default", "file", "env:NAME" or "flag --name".
  const std::map<std::string, std::string>& sources() const noexcept { return sources_; }
  const std::vector<Setting>& settings() const noexcept { return settings_; }
  /// Logs the winning source for every leaf.
  void log_sources() const;
  std::string digest() const;

 private:
  json doc_;
  std::vector<Setting> settings_;
  std::map<std::string, std::string> sources_;
  std::map<std::string, std::string> aliases_;
  std::vector<std::string> raw_;
  std::vector<CLI::Option*> options_;
};

/// Leaf JSON pointers of `doc`; arrays count as leaves.
std::vector<std::string> leaf_paths(const json& doc);

}  // namespace waveprompt::cli
