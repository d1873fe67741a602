// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>
#include <random>

#include "fixtures.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/prompting.hpp"

namespace waveprompt {
namespace {

PromptTemplates tiny_templates() {
  PromptTemplates t;
  t.task_description = "Classify into {class_names}.";
  t.diagnostic_criteria = "Criteria.";
  t.analysis_protocol = "Protocol with {num_examples} examples.";
  t.output_constraints = "End with DECISION: <one of {class_names}>";
  return t;
}

WaveformImage image(const std::string& bytes, TrialRef source = {"Q", 9}) {
  WaveformImage w;
  w.png_bytes.assign(bytes.begin(), bytes.end());
  w.source = std::move(source);
  return w;
}

SupportSet support_of(const std::vector<std::pair<TrialRef, int>>& entries, std::size_t shots) {
  SupportSet s;
  s.config.shots = shots;
  s.test = {"Q", 9};
  for (const auto& [ref, label] : entries) {
    SupportEntry e;
    e.source = ref;
    e.label = ClassLabel{label};
    e.selection_score = 0.25 * label;
    e.image = image(ref.subject_id + std::to_string(ref.trial_index), ref);
    s.entries.push_back(std::move(e));
  }
  return s;
}

PromptConfig config_for(PromptTier tier) {
  PromptConfig c;
  c.tier = tier;
  c.templates = tiny_templates();
  return c;
}

std::vector<std::string> roles(const PromptBundle& b) {
  std::vector<std::string> out;
  for (const auto& p : b.parts) {
    if (p.kind == PromptPart::Kind::Image) out.push_back(p.role);
  }
  return out;
}

bool has_example_labels(const PromptBundle& b) {
  for (const auto& p : b.parts) {
    if (p.kind == PromptPart::Kind::Text && p.text.rfind(kExampleLabelPrefix, 0) == 0) return true;
  }
  return false;
}

TEST(Tier, Names) {
  for (PromptTier t : {PromptTier::Base, PromptTier::Reasoning, PromptTier::ReasoningExamples}) {
    EXPECT_EQ(parse_prompt_tier(to_string(t)), t);
  }
  EXPECT_EQ(parse_prompt_tier("reasoning-examples"), PromptTier::ReasoningExamples);
  EXPECT_THROW(parse_prompt_tier("fancy"), ConfigError);
}

TEST(BuildPrompt, BaseTierHasOneImageAndNoExamples) {
  const auto b = build_prompt(config_for(PromptTier::Base), nullptr, image("q"));
  EXPECT_EQ(b.image_count(), 1U);
  EXPECT_EQ(roles(b), std::vector<std::string>{"query"});
  EXPECT_FALSE(has_example_labels(b));
  ASSERT_EQ(b.parts.size(), 4U);
  EXPECT_EQ(b.parts[0].text, "Classify into NON-SEIZURE, SEIZURE.");
  EXPECT_EQ(b.parts[1].text, kQueryLabel);
  EXPECT_EQ(b.query_part(), 2U);
  EXPECT_EQ(b.parts[3].text, "End with DECISION: <one of NON-SEIZURE, SEIZURE>");
  EXPECT_TRUE(b.support.empty());
}

TEST(BuildPrompt, ReasoningTierAddsCriteriaThenProtocol) {
  const auto b = build_prompt(config_for(PromptTier::Reasoning), nullptr, image("q"));
  EXPECT_EQ(b.image_count(), 1U);
  ASSERT_EQ(b.parts.size(), 6U);
  EXPECT_EQ(b.parts[1].text, "Criteria.");
  EXPECT_EQ(b.parts[2].text, "Protocol with 0 examples.");
  EXPECT_FALSE(has_example_labels(b));
}

TEST(BuildPrompt, ExamplesTierOrdersClassZeroThenOneThenQuery) {
  const auto s = support_of({{{"A", 1}, 0}, {{"B", 2}, 0}, {{"C", 3}, 1}, {{"D", 4}, 1}}, 2);
  const auto b = build_prompt(config_for(PromptTier::ReasoningExamples), &s, image("q"));
  EXPECT_EQ(b.image_count(), 5U);
  EXPECT_EQ(roles(b), (std::vector<std::string>{"example:NON-SEIZURE", "example:NON-SEIZURE", "example:SEIZURE",
                                                "example:SEIZURE", "query"}));
  EXPECT_EQ(b.parts[2].text, "Protocol with 4 examples.");
  std::size_t image_index = 0;
  for (std::size_t i = 0; i < b.parts.size(); ++i) {
    if (b.parts[i].kind != PromptPart::Kind::Image || b.parts[i].role == "query") continue;
    ASSERT_GT(i, 0U);
    const auto& e = s.entries[image_index++];
    EXPECT_EQ(b.parts[i - 1].text, std::string(kExampleLabelPrefix) + (e.label.value == 0 ? "NON-SEIZURE" : "SEIZURE"));
    EXPECT_EQ(b.parts[i].source, e.source);
    EXPECT_EQ(b.parts[i].png, e.image->png_bytes);
  }
  EXPECT_EQ(b.parts[b.query_part() - 1].text, kQueryLabel);
  EXPECT_EQ(b.parts.back().kind, PromptPart::Kind::Text);
  ASSERT_EQ(b.support.size(), 4U);
  EXPECT_FALSE(b.support[0].image.has_value());
}

TEST(BuildPrompt, ImageLabelAdjacencyOverRandomSupportSets) {
  std::mt19937_64 gen(31);
  for (int round = 0; round < 100; ++round) {
    const int k = 2 + round % 3;
    const std::size_t m = 1 + static_cast<std::size_t>(round % 4);
    std::vector<std::pair<TrialRef, int>> entries;
    for (int label = 0; label < k; ++label) {
      for (std::size_t i = 0; i < m; ++i) {
        entries.push_back({{"S" + std::to_string(gen() % 9), static_cast<std::uint32_t>(gen() % 1000)}, label});
      }
    }
    const auto s = support_of(entries, m);
    PromptConfig c = config_for(PromptTier::ReasoningExamples);
    c.class_names = default_class_names(k);
    const auto b = build_prompt(c, &s, image("q"));
    EXPECT_EQ(b.image_count(), m * static_cast<std::size_t>(k) + 1);
    std::size_t queries = 0;
    for (std::size_t i = 0; i < b.parts.size(); ++i) {
      const auto& p = b.parts[i];
      if (p.kind != PromptPart::Kind::Image) continue;
      if (p.role == "query") {
        ++queries;
        continue;
      }
      const std::string name = p.role.substr(std::string("example:").size());
      EXPECT_EQ(b.parts[i - 1].text, std::string(kExampleLabelPrefix) + name);
    }
    EXPECT_EQ(queries, 1U);
  }
}

TEST(BuildPrompt, Errors) {
  EXPECT_THROW(build_prompt(config_for(PromptTier::ReasoningExamples), nullptr, image("q")), PromptError);
  auto s = support_of({{{"A", 1}, 0}, {{"C", 3}, 1}}, 1);
  s.entries[1].image.reset();
  EXPECT_THROW(build_prompt(config_for(PromptTier::ReasoningExamples), &s, image("q")), PromptError);
  auto bad = support_of({{{"A", 1}, 0}, {{"C", 3}, 5}}, 1);
  EXPECT_THROW(build_prompt(config_for(PromptTier::ReasoningExamples), &bad, image("q")), PromptError);
  PromptConfig reserved = config_for(PromptTier::Base);
  reserved.class_names = {"DECISION", "OTHER"};
  EXPECT_THROW(build_prompt(reserved, nullptr, image("q")), ConfigError);
}

TEST(BuildPrompt, DigestIsDeterministicAndTracksEveryByte) {
  const auto s = support_of({{{"A", 1}, 0}, {{"C", 3}, 1}}, 1);
  const auto config = config_for(PromptTier::ReasoningExamples);
  const auto a = build_prompt(config, &s, image("query-bytes"));
  const auto b = build_prompt(config, &s, image("query-bytes"));
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_EQ(a.digest, a.compute_digest());
  EXPECT_NE(build_prompt(config, &s, image("query-bytez")).digest, a.digest);
  auto s2 = s;
  s2.entries[0].image->png_bytes.back() ^= 1;
  EXPECT_NE(build_prompt(config, &s2, image("query-bytes")).digest, a.digest);
  auto c2 = config;
  c2.templates.diagnostic_criteria += " ";
  c2.templates.diagnostic_criteria += "x";
  EXPECT_NE(build_prompt(c2, &s, image("query-bytes")).digest, a.digest);
  // Moving bytes across a part boundary changes the digest.
  PromptBundle x;
  x.parts = {PromptPart::make_text("ab"), PromptPart::make_text("c")};
  PromptBundle y;
  y.parts = {PromptPart::make_text("a"), PromptPart::make_text("bc")};
  EXPECT_NE(x.compute_digest(), y.compute_digest());
}

TEST(BundleJson, RoundTripsAndDetectsTampering) {
  const auto s = support_of({{{"A", 1}, 0}, {{"C", 3}, 1}}, 1);
  const auto b = build_prompt(config_for(PromptTier::ReasoningExamples), &s, image(std::string("\x89PNG\0\1", 6)));
  const auto back = PromptBundle::from_json(b.to_json());
  EXPECT_EQ(back.digest, b.digest);
  EXPECT_EQ(back.to_json(), b.to_json());
  EXPECT_EQ(back.image_count(), b.image_count());
  EXPECT_EQ(back.support.size(), 2U);
  EXPECT_EQ(back.query, b.query);

  auto j = nlohmann::json::parse(b.to_json());
  j["parts"][0]["text"] = "something else";
  EXPECT_THROW(PromptBundle::from_json(j.dump()), PromptError);
  EXPECT_THROW(PromptBundle::from_json("{}"), PromptError);
}

TEST(Templates, DefaultsLoadAndMentionTheDecisionContract) {
  const auto t = PromptTemplates::load(default_template_dir());
  EXPECT_FALSE(t.task_description.empty());
  EXPECT_FALSE(t.diagnostic_criteria.empty());
  EXPECT_FALSE(t.analysis_protocol.empty());
  EXPECT_NE(t.output_constraints.find("DECISION:"), std::string::npos);
  EXPECT_NE(t.output_constraints.find("{class_names}"), std::string::npos);
  EXPECT_EQ(t.version().size(), 64U);
  EXPECT_NE(t.version(), tiny_templates().version());
}

TEST(Templates, MissingDirectoryIsAnError) {
  testing::TempDir dir;
  EXPECT_THROW(PromptTemplates::load(dir / "nope"), Error);
}

TEST(ClassNames, NormalizeAndValidate) {
  PromptConfig c;
  c.class_names = {" rest ", "Seizure"};
  c.normalize();
  EXPECT_EQ(c.class_names, (std::vector<std::string>{"REST", "SEIZURE"}));
  EXPECT_NO_THROW(c.validate());
  c.class_names = {"A", "A"};
  EXPECT_THROW(c.validate(), ConfigError);
  c.class_names = {"A B", "C"};
  EXPECT_THROW(c.validate(), ConfigError);
  c.class_names = {"A:", "C"};
  EXPECT_THROW(c.validate(), ConfigError);
  c.class_names = {"", "C"};
  EXPECT_THROW(c.validate(), ConfigError);
  c.class_names = {"only"};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(default_class_names(3), (std::vector<std::string>{"CLASS-0", "CLASS-1", "CLASS-2"}));
}

// --- parsing ----------------------------------------------------------------------

const std::vector<std::string> kNames = {"NON-SEIZURE", "SEIZURE"};

int label_of(const Decision& d) { return std::get<ClassLabel>(d).value; }

TEST(ParseDecision, ExactLine) {
  EXPECT_EQ(label_of(parse_decision("step 1...\nstep 2...\nDECISION: SEIZURE", kNames)), 1);
}

TEST(ParseDecision, CaseInsensitive) { EXPECT_EQ(label_of(parse_decision("decision: non-seizure", kNames)), 0); }

TEST(ParseDecision, NoClassTokenFails) {
  const auto d = parse_decision("The trial shows both patterns.", kNames);
  ASSERT_TRUE(is_failure(d));
  EXPECT_EQ(std::get<ParseFailure>(d).raw_text, "The trial shows both patterns.");
}

TEST(ParseDecision, RoundTripsEveryClassName) {
  for (const auto& names : {kNames, default_class_names(5), std::vector<std::string>{"LEFT_HAND", "RIGHT_HAND", "REST"}}) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      EXPECT_EQ(label_of(parse_decision("analysis\nDECISION: " + names[k] + "\n", names)), static_cast<int>(k));
    }
  }
}

TEST(ParseDecision, LastDecisionLineWins) {
  EXPECT_EQ(label_of(parse_decision("DECISION: SEIZURE\nwait, revising\nDECISION: NON-SEIZURE", kNames)), 0);
}

TEST(ParseDecision, ToleratesMarkdownAndPunctuation) {
  EXPECT_EQ(label_of(parse_decision("**DECISION: SEIZURE**", kNames)), 1);
  EXPECT_EQ(label_of(parse_decision("  Decision : `NON-SEIZURE`.", kNames)), 0);
  EXPECT_EQ(label_of(parse_decision("### DECISION: seizure!", kNames)), 1);
}

TEST(ParseDecision, UnknownNameOnDecisionLineFallsBackToScan) {
  EXPECT_TRUE(is_failure(parse_decision("DECISION: ARTIFACT", kNames)));
  EXPECT_EQ(label_of(parse_decision("DECISION: maybe\nI lean towards SEIZURE", kNames)), 1);
}

TEST(ParseDecision, FallbackNeedsExactlyOneWholeToken) {
  EXPECT_EQ(label_of(parse_decision("Overall this looks like NON-SEIZURE activity.", kNames)), 0);
  EXPECT_EQ(label_of(parse_decision("Overall: seizure.", kNames)), 1);
  EXPECT_TRUE(is_failure(parse_decision("Either SEIZURE or NON-SEIZURE.", kNames)));
  EXPECT_TRUE(is_failure(parse_decision("PRESEIZURE patterns", kNames)));
}

TEST(ParseDecision, FallbackOnlyReadsTheTail) {
  const std::string padding(kFallbackWindow, '.');
  EXPECT_TRUE(is_failure(parse_decision("SEIZURE" + padding, kNames)));
  EXPECT_EQ(label_of(parse_decision(padding + "SEIZURE", kNames)), 1);
  // A decision line is honoured anywhere.
  EXPECT_EQ(label_of(parse_decision("DECISION: SEIZURE\n" + padding, kNames)), 1);
}

TEST(ParseDecision, EmptyResponse) { EXPECT_TRUE(is_failure(parse_decision("", kNames))); }

}  // namespace
}  // namespace waveprompt
