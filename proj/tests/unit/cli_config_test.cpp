// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <set>

#include "cli_config.hpp"
#include "fixtures.hpp"
#include "waveprompt/evaluation.hpp"

namespace waveprompt::cli {
namespace {

class ScopedEnv {
 public:
  ScopedEnv(std::string name, const std::string& value) : name_(std::move(name)) {
    ::setenv(name_.c_str(), value.c_str(), 1);
  }
  ~ScopedEnv() { ::unsetenv(name_.c_str()); }
  ScopedEnv(const ScopedEnv&) = delete;
  ScopedEnv& operator=(const ScopedEnv&) = delete;

 private:
  std::string name_;
};

Setting find(const std::vector<Setting>& settings, const std::string& flag) {
  for (const auto& s : settings) {
    if (s.flag == flag) return s;
  }
  throw std::out_of_range(flag);
}

TEST(CliConfig, EnvironmentNames) {
  EXPECT_EQ(env_name("--max-retries"), "WAVEPROMPT_MAX_RETRIES");
  EXPECT_EQ(env_name("--rpm"), "WAVEPROMPT_RPM");
  EXPECT_EQ(env_name("--allow-nonzero-temperature"), "WAVEPROMPT_ALLOW_NONZERO_TEMPERATURE");
}

TEST(CliConfig, EveryEvaluationLeafHasAFlag) {
  const json doc = json::parse(EvalConfig{}.to_json());
  const auto settings = evaluation_settings();
  std::set<std::string> flags;
  for (const auto& s : settings) {
    EXPECT_TRUE(flags.insert(s.flag).second) << "duplicate flag " << s.flag;
    EXPECT_TRUE(doc.contains(json::json_pointer(s.path))) << s.flag << " -> " << s.path;
  }
  // Handled by the global --jobs and --no-cache options.
  const std::set<std::string> global = {"/jobs", "/refresh_cache"};
  for (const auto& leaf : leaf_paths(doc)) {
    if (global.contains(leaf)) continue;
    bool covered = false;
    for (const auto& s : settings) covered = covered || (s.path == leaf && s.kind != ValueKind::JsonFile);
    EXPECT_TRUE(covered) << "no flag for " << leaf;
  }
}

TEST(CliConfig, ConvertsEveryKind) {
  const Setting s{"--x", "/x", ValueKind::String, ""};
  auto as = [&](ValueKind k, const std::string& raw) {
    Setting t = s;
    t.kind = k;
    return convert(t, raw);
  };
  EXPECT_EQ(as(ValueKind::Int, "-3"), -3);
  EXPECT_EQ(as(ValueKind::UInt, "7"), 7U);
  EXPECT_DOUBLE_EQ(as(ValueKind::Number, "0.25").get<double>(), 0.25);
  EXPECT_EQ(as(ValueKind::Bool, "Yes"), true);
  EXPECT_EQ(as(ValueKind::Bool, "off"), false);
  EXPECT_EQ(as(ValueKind::List, "a, b,,c"), json({"a", "b", "c"}));
  EXPECT_EQ(as(ValueKind::IntList, "20,5"), json({20, 5}));
  EXPECT_EQ(as(ValueKind::Rgb, "1,2,3"), json({1, 2, 3}));
  EXPECT_EQ(as(ValueKind::RgbList, "1,2,3;4,5,6"), json({{1, 2, 3}, {4, 5, 6}}));
  for (const auto& [k, raw] : std::vector<std::pair<ValueKind, std::string>>{{ValueKind::Int, "3x"},
                                                                           {ValueKind::UInt, "-1"},
                                                                           {ValueKind::Number, "fast"},
                                                                           {ValueKind::Bool, "maybe"},
                                                                           {ValueKind::IntList, "1,-2"},
                                                                           {ValueKind::Rgb, "1,2"},
                                                                           {ValueKind::Rgb, "1,2,300"},
                                                                           {ValueKind::JsonFile, "/no/such.json"}}) {
    EXPECT_THROW(as(k, raw), UsageError) << raw;
  }
}

TEST(CliConfig, PrecedenceIsFileThenEnvironmentThenFlag) {
  const json defaults = json::parse(EvalConfig{}.to_json());
  LayeredConfig cfg(defaults, evaluation_settings());
  CLI::App app;
  cfg.bind(app);
  const char* argv[] = {"prog", "--shots", "4", "--fallback-random"};
  app.parse(4, const_cast<char**>(argv));

  ScopedEnv shots("WAVEPROMPT_SHOTS", "3");
  ScopedEnv rpm("WAVEPROMPT_RPM", "12");
  cfg.apply_file(json{{"selection", {{"shots", 2}, {"seed", 9}}}, {"backend", {{"requests_per_minute", 5}}}}, true);
  cfg.apply_environment();
  cfg.apply_flags();

  const json& d = cfg.document();
  EXPECT_EQ(d["selection"]["shots"], 4);
  EXPECT_EQ(d["selection"]["seed"], 9);
  EXPECT_EQ(d["backend"]["requests_per_minute"], 12);
  EXPECT_EQ(d["fallback_random"], true);
  EXPECT_EQ(d["prompt"]["tier"], defaults["prompt"]["tier"]);
  EXPECT_EQ(cfg.sources().at("/selection/shots"), "flag --shots");
  EXPECT_EQ(cfg.sources().at("/selection/seed"), "file");
  EXPECT_EQ(cfg.sources().at("/backend/requests_per_minute"), "env:WAVEPROMPT_RPM");
  EXPECT_EQ(cfg.sources().at("/prompt/tier"), "default");

  const json ex = cfg.explicit_document();
  EXPECT_FALSE(ex.contains("prompt"));
  EXPECT_EQ(ex["selection"]["shots"], 4);
  const EvalConfig resolved = EvalConfig::from_json(ex.dump());
  EXPECT_EQ(resolved.selection.shots, 4U);
  EXPECT_TRUE(resolved.fallback_random);
}

TEST(CliConfig, FileKeysAreChecked) {
  LayeredConfig cfg(json::parse(EvalConfig{}.to_json()), evaluation_settings());
  EXPECT_THROW(cfg.apply_file(json{{"nonsense", 1}}, true), UsageError);
  EXPECT_NO_THROW(cfg.apply_file(json{{"nonsense", 1}}, false));
  EXPECT_THROW(cfg.apply_file(json{{"selection", {{"bogus", 1}}}}, false), UsageError);
  EXPECT_THROW(cfg.apply_file(json::array(), false), UsageError);
}

TEST(CliConfig, JsonFileSettingMergesLeaves) {
  testing::TempDir dir;
  testing::write_file(dir / "backend.json", R"({"model": "vision-2", "max_retries": 1})");
  LayeredConfig cfg(json::parse(EvalConfig{}.to_json()), evaluation_settings());
  cfg.assign("/backend", convert(find(cfg.settings(), "--backend"), (dir / "backend.json").string()), "flag --backend");
  EXPECT_EQ(cfg.document()["backend"]["model"], "vision-2");
  EXPECT_EQ(cfg.document()["backend"]["max_retries"], 1);
  EXPECT_EQ(cfg.sources().at("/backend/model"), "flag --backend");
  EXPECT_EQ(cfg.sources().at("/backend/endpoint"), "default");
}

TEST(CliConfig, DigestTracksValues) {
  LayeredConfig a(json::parse(EvalConfig{}.to_json()), evaluation_settings());
  LayeredConfig b(json::parse(EvalConfig{}.to_json()), evaluation_settings());
  EXPECT_EQ(a.digest(), b.digest());
  b.assign("/selection/shots", 3, "test");
  EXPECT_NE(a.digest(), b.digest());
}

}  // namespace
}  // namespace waveprompt::cli
