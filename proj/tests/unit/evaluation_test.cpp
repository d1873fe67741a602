// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

#include "e2e.hpp"
#include "fakes.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/evaluation.hpp"
#include "waveprompt/metrics.hpp"

namespace waveprompt {
namespace {

using testing::FakeTransport;

constexpr const char* kKeyEnv = "WAVEPROMPT_TEST_EVAL_KEY";

class KeyEnv {
 public:
  KeyEnv() { ::setenv(kKeyEnv, "sk-eval", 1); }
  ~KeyEnv() { ::unsetenv(kKeyEnv); }
  KeyEnv(const KeyEnv&) = delete;
  KeyEnv& operator=(const KeyEnv&) = delete;
};

BackendConfig remote() {
  BackendConfig c;
  c.kind = BackendKind::RemoteChat;
  c.endpoint = "https://vlm.example/v1/chat/completions";
  c.model = "vision-1";
  c.api_key_env = kKeyEnv;
  c.max_retries = 0;
  c.requests_per_minute = 0;
  return c;
}

// Resources around a scripted remote backend.
struct FakeRemote {
  KeyEnv key;
  std::shared_ptr<SimulatedClock> clock = std::make_shared<SimulatedClock>();
  std::shared_ptr<FakeTransport> transport;
  EvalResources resources;

  explicit FakeRemote(std::vector<FakeTransport::Reply> script, std::shared_ptr<EmbeddingProvider> provider = nullptr) {
    transport = std::make_shared<FakeTransport>(std::move(script), clock);
    VlmGateway::Options o;
    o.transport = transport;
    o.clock = clock;
    o.cache = std::make_shared<ResponseCache>();
    resources.provider = std::move(provider);
    resources.embedding_cache = std::make_shared<EmbeddingCache>();
    resources.renders = std::make_shared<RenderCache>();
    resources.gateway = std::make_shared<VlmGateway>(remote(), o);
  }
};

EvalConfig anchor_config() {
  EvalConfig c;
  c.render = testing::small_render();
  c.backend = remote();
  c.selection.shots = 1;
  c.selection.strategy = Strategy::RestingStateAnchor;
  c.tier = PromptTier::ReasoningExamples;
  return c;
}

// --- metrics -------------------------------------------------------------------

TEST(Bca, KnownValues) {
  EXPECT_DOUBLE_EQ(bca({{10, 0}, {0, 10}}), 100.0);
  EXPECT_DOUBLE_EQ(bca({{7, 3}, {3, 7}}), 70.0);
  EXPECT_DOUBLE_EQ(bca({{5, 5}, {5, 5}}), 50.0);
  // Imbalanced: recalls 90% and 50%.
  EXPECT_DOUBLE_EQ(bca({{90, 10}, {1, 1}}), 70.0);
  EXPECT_DOUBLE_EQ(accuracy({{90, 10}, {1, 1}}), 100.0 * 91.0 / 102.0);
}

TEST(Bca, InvariantUnderClassPermutationAndDuplication) {
  const ConfusionMatrix m = {{4, 1, 2}, {0, 5, 3}, {6, 1, 1}};
  const ConfusionMatrix permuted = {{1, 6, 1}, {2, 4, 1}, {3, 0, 5}};  // order (2, 0, 1)
  EXPECT_NEAR(bca(m), bca(permuted), 1e-12);
  ConfusionMatrix doubled = m;
  for (auto& row : doubled) {
    for (auto& c : row) c *= 2;
  }
  EXPECT_NEAR(bca(m), bca(doubled), 1e-12);
}

TEST(Bca, EqualsAccuracyWhenBalanced) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 2 + gen() % 4;
    const std::uint64_t n = 1 + gen() % 40;
    ConfusionMatrix m(k, std::vector<std::uint64_t>(k, 0));
    for (auto& row : m) {
      for (std::uint64_t i = 0; i < n; ++i) ++row[gen() % k];
    }
    EXPECT_NEAR(bca(m), accuracy(m), 1e-12);
  }
}

TEST(Bca, MatchesExactRational) {
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 2 + gen() % 5;
    ConfusionMatrix m(k, std::vector<std::uint64_t>(k, 0));
    for (auto& row : m) {
      for (auto& c : row) c = gen() % 1000;
      row[gen() % k] += 1;
    }
    EXPECT_NEAR(bca(m), static_cast<double>(oracle::bca(m).value()), 1e-12) << "rep " << rep;
    EXPECT_NEAR(accuracy(m), oracle::accuracy(m), 1e-12);
  }
}

TEST(Bca, IsCorrectlyRounded) {
  std::mt19937_64 gen(6);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t k = 2 + gen() % 4;
    ConfusionMatrix m(k, std::vector<std::uint64_t>(k, 0));
    for (auto& row : m) {
      for (auto& c : row) c = gen() % 40;
      row[gen() % k] += 1;
    }
    EXPECT_TRUE(oracle::correctly_rounded(bca(m), oracle::bca(m))) << "rep " << rep;
  }
  // 1/3 + 1/3 is not exact in binary; the reduced fraction is 200/3.
  EXPECT_EQ(bca({{1, 2}, {2, 1}}), 200.0 / 6.0);
  EXPECT_FALSE(oracle::correctly_rounded(std::nextafter(200.0 / 6.0, 100.0), oracle::bca({{1, 2}, {2, 1}})));
}

TEST(Bca, HugeCountsFallBackToFloatingPoint) {
  const std::uint64_t big = std::uint64_t{1} << 62;
  EXPECT_NEAR(bca({{big - 1, 1}, {3, big - 3}}), 100.0, 1e-9);
  EXPECT_NEAR(bca({{big, big}, {1, 2}}), 100.0 * (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
}

TEST(Bca, Errors) {
  EXPECT_THROW(bca({{1, 0}, {0, 0}}), MetricError);
  EXPECT_THROW(bca({{1, 0}}), MetricError);
  EXPECT_THROW(bca({}), MetricError);
  EXPECT_EQ(make_confusion(3), ConfusionMatrix(3, std::vector<std::uint64_t>(3, 0)));
}

// --- report --------------------------------------------------------------------

Prediction scored(std::uint32_t index, int truth, int label) {
  Prediction p;
  p.trial_index = index;
  p.true_label = truth;
  p.predicted = label;
  p.scored_label = label;
  return p;
}

TEST(Report, SubjectMissingAClassHasNoBca) {
  EvalReport r;
  SubjectResult a;
  a.subject_id = "A";
  a.predictions = {scored(0, 0, 0), scored(1, 1, 1), scored(2, 1, 0), scored(3, 0, 0)};
  SubjectResult b;
  b.subject_id = "B";
  b.predictions = {scored(0, 0, 0), scored(1, 0, 1)};
  SubjectResult c;
  c.subject_id = "C";
  c.predictions = {scored(0, 0, 0), scored(1, 1, 1)};
  r.subjects = {a, b, c};
  finalize_report(r, 2);
  EXPECT_DOUBLE_EQ(*r.subjects[0].bca, 75.0);
  EXPECT_FALSE(r.subjects[1].bca.has_value());
  EXPECT_EQ(r.subjects[1].bca_note.rfind("excluded from mean: ", 0), 0U);
  EXPECT_DOUBLE_EQ(*r.subjects[2].bca, 100.0);
  EXPECT_EQ(r.subjects_in_mean, 2U);
  EXPECT_DOUBLE_EQ(*r.mean_bca, 87.5);
  EXPECT_EQ(r.evaluated, 8U);
}

TEST(Report, CountsByStatus) {
  EvalReport r;
  SubjectResult s;
  s.subject_id = "A";
  Prediction skipped;
  skipped.status = TrialStatus::Skipped;
  Prediction excluded;
  excluded.status = TrialStatus::Excluded;
  excluded.parse_failure = true;
  Prediction failed;
  failed.status = TrialStatus::Failed;
  s.predictions = {scored(0, 0, 0), skipped, excluded, failed};
  r.subjects = {s};
  finalize_report(r, 2);
  EXPECT_EQ(r.evaluated, 1U);
  EXPECT_EQ(r.skipped, 1U);
  EXPECT_EQ(r.excluded, 1U);
  EXPECT_EQ(r.failed, 1U);
  EXPECT_EQ(r.parse_failures, 1U);
  EXPECT_FALSE(r.mean_bca.has_value());

  Prediction broken;  // evaluated without a label
  r.subjects[0].predictions.push_back(broken);
  EXPECT_THROW(finalize_report(r, 2), Error);
}

TEST(Report, JsonRoundTripAndCsv) {
  EvalReport r;
  r.config_json = EvalConfig{}.to_json();
  r.strategy = "random";
  r.tier = "base";
  r.class_names = {"NON-SEIZURE", "SEIZURE"};
  SubjectResult s;
  s.subject_id = "A";
  Prediction p = scored(0, 1, 1);
  p.prompt_digest = "abc";
  p.raw_response = "x,\"y\"\nDECISION: SEIZURE";
  p.support = {{{"B", 2}, 1, 0.25}, {{"A", 0}, 0, std::nullopt}};
  s.predictions = {p, scored(1, 0, 1)};
  r.subjects = {s};
  r.cache = {2, 1, 1, 0};
  r.external_baselines["other"] = 61.5;
  finalize_report(r, 2);

  EXPECT_EQ(EvalReport::from_json(r.to_json()), r);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.rfind("subject_id,trial_index,true_label,true_class,predicted_label,predicted_class,scored_label,", 0),
            0U);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("A,1,0,NON-SEIZURE,1,SEIZURE,1,"), std::string::npos);
  EXPECT_FALSE(r.summary().empty());
  EXPECT_THROW(EvalReport::from_json("{"), Error);
}

// --- config ----------------------------------------------------------------------

TEST(EvalConfigTest, JsonRoundTrip) {
  EvalConfig c;
  c.manifest = "/data/manifest.json";
  c.selection.shots = 3;
  c.selection.strategy = Strategy::Representativeness;
  c.tier = PromptTier::Reasoning;
  c.class_names = {"calm", "storm"};
  c.parse_failure = ParseFailurePolicy::Exclude;
  c.subjects = {"P2", "P1"};
  c.fallback_random = true;
  c.jobs = 3;
  c.embedding.provider = "http";
  c.embedding.url = "http://localhost:8000";
  c.downsample = DownsamplePolicy::parse("every-nth-of-class:3:0");
  const EvalConfig back = EvalConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.digest(), c.digest());
  c.jobs = 4;
  EXPECT_NE(back.digest(), c.digest());
}

TEST(EvalConfigTest, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(EvalConfig::from_json(R"({"shots": 2})"), ConfigError);
  EXPECT_THROW(EvalConfig::from_json(R"({"selection": {"shots": 2, "mode": 1}})"), ConfigError);
  EXPECT_THROW(EvalConfig::from_json(R"({"tier": "everything"})"), ConfigError);
  EXPECT_NO_THROW(EvalConfig::from_json(R"({"jobs": 2})"));
  EvalConfig c;
  c.jobs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.jobs = 1;
  c.subjects = {"A", "A"};
  EXPECT_THROW(c.validate(), ConfigError);
  c.subjects.clear();
  c.embedding.provider = "http";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_parse_failure_policy("exclude"), ParseFailurePolicy::Exclude);
  EXPECT_THROW(parse_parse_failure_policy("ignore"), ConfigError);
}

TEST(PrepareDataset, SubjectsKeepManifestOrder) {
  const auto data = testing::labelled_dataset({{"A", {0, 1}}, {"B", {1, 0}}, {"C", {0, 1}}});
  EvalConfig c;
  c.subjects = {"C", "A"};
  const auto out = prepare_dataset(data, c);
  ASSERT_EQ(out.subjects.size(), 2U);
  EXPECT_EQ(out.subjects[0].subject_id, "A");
  EXPECT_EQ(out.subjects[1].subject_id, "C");
  c.subjects = {"Z", "A"};
  EXPECT_THROW(prepare_dataset(data, c), ConfigError);
  c.subjects = {"A"};
  EXPECT_THROW(prepare_dataset(data, c), ConfigError);
}

TEST(ParallelFor, VisitsEachIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 3, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw ConfigError("boom");
                            }),
               ConfigError);
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

// --- audit -----------------------------------------------------------------------

PromptBundle audit_fixture(const TrialRef& example, const std::string& cls, const std::string& label_text) {
  PromptBundle b;
  b.class_names = {"NON-SEIZURE", "SEIZURE"};
  b.parts = {PromptPart::make_text(label_text), PromptPart::make_image({1}, "example:" + cls, example),
             PromptPart::make_text(std::string(kQueryLabel)), PromptPart::make_image({2}, "query", TrialRef{"A", 2})};
  b.query = TrialRef{"A", 2};
  return b;
}

TEST(Audit, FlagsEveryViolationKind) {
  const auto data = testing::labelled_dataset({{"A", {0, 1, 0, 0}}, {"B", {1, 0}}});
  const std::string pre(kExampleLabelPrefix);
  auto run = [&](const PromptBundle& b) {
    AuditResult a;
    audit_bundle(b, data, a);
    return a;
  };
  EXPECT_TRUE(run(audit_fixture({"A", 0}, "NON-SEIZURE", pre + "NON-SEIZURE")).passed());
  EXPECT_TRUE(run(audit_fixture({"B", 0}, "SEIZURE", pre + "SEIZURE")).passed());
  EXPECT_FALSE(run(audit_fixture({"A", 3}, "NON-SEIZURE", pre + "NON-SEIZURE")).passed());  // anchor after query
  EXPECT_FALSE(run(audit_fixture({"A", 1}, "SEIZURE", pre + "SEIZURE")).passed());          // task class from A
  EXPECT_FALSE(run(audit_fixture({"B", 1}, "SEIZURE", pre + "SEIZURE")).passed());          // mislabelled
  EXPECT_FALSE(run(audit_fixture({"B", 0}, "SEIZURE", pre + "NON-SEIZURE")).passed());      // wrong caption
  EXPECT_FALSE(run(audit_fixture({"Q", 0}, "SEIZURE", pre + "SEIZURE")).passed());          // unknown trial
  PromptBundle no_query = audit_fixture({"B", 0}, "SEIZURE", pre + "SEIZURE");
  no_query.query.reset();
  EXPECT_FALSE(run(no_query).passed());
  const auto a = run(audit_fixture({"B", 0}, "SEIZURE", pre + "SEIZURE"));
  EXPECT_EQ(a.bundles, 1U);
  EXPECT_EQ(a.example_images, 1U);
}

// --- LOSO with a scripted backend --------------------------------------------------

// A: 0 1 0 1, B: 1 0 1 0. With one anchor, A/0, B/0 and B/1 have no history.
DatasetManifest alternating() { return testing::labelled_dataset({{"A", {0, 1, 0, 1}}, {"B", {1, 0, 1, 0}}}); }

TEST(Loso, ShortHistoryIsSkippedOrFallsBack) {
  const auto data = alternating();
  {
    FakeRemote r({FakeTransport::chat("DECISION: SEIZURE")});
    const auto report = run_loso(anchor_config(), data, r.resources);
    EXPECT_EQ(report.skipped, 3U);
    EXPECT_EQ(report.evaluated, 5U);
    EXPECT_EQ(report.subjects[0].predictions[0].status, TrialStatus::Skipped);
    EXPECT_EQ(report.subjects[0].predictions[0].note.rfind("skipped: ", 0), 0U);
    // The tiny fixture trials normalise to identical images, so only the
    // first prompt reaches the backend.
    EXPECT_EQ(report.cache.requests, 5U);
    EXPECT_EQ(r.transport->calls(), report.cache.backend_calls);
    EXPECT_TRUE(report.audit.passed());
  }
  {
    FakeRemote r({FakeTransport::chat("DECISION: SEIZURE")});
    EvalConfig c = anchor_config();
    c.fallback_random = true;
    const auto report = run_loso(c, data, r.resources);
    EXPECT_EQ(report.skipped, 0U);
    EXPECT_EQ(report.fallbacks, 3U);
    EXPECT_EQ(report.evaluated, 8U);
    const auto& p = report.subjects[0].predictions[0];
    EXPECT_TRUE(p.fallback);
    ASSERT_EQ(p.support.size(), 2U);
    EXPECT_EQ(p.support[0].source.subject_id, "B");  // random anchors come from other subjects
    EXPECT_TRUE(report.audit.passed());
  }
}

TEST(Loso, ParseFailurePolicies) {
  const auto data = alternating();
  EvalConfig c = anchor_config();
  c.tier = PromptTier::Base;
  {
    FakeRemote r({FakeTransport::chat("cannot tell")});
    const auto report = run_loso(c, data, r.resources);
    EXPECT_EQ(report.parse_failures, 8U);
    EXPECT_EQ(report.evaluated, 8U);
    for (const auto& s : report.subjects) {
      for (const auto& p : s.predictions) {
        EXPECT_FALSE(p.predicted.has_value());
        EXPECT_EQ(*p.scored_label, 1 - p.true_label);
      }
    }
    EXPECT_DOUBLE_EQ(*report.mean_bca, 0.0);
  }
  {
    FakeRemote r({FakeTransport::chat("cannot tell")});
    c.parse_failure = ParseFailurePolicy::Exclude;
    const auto report = run_loso(c, data, r.resources);
    EXPECT_EQ(report.excluded, 8U);
    EXPECT_EQ(report.evaluated, 0U);
    EXPECT_FALSE(report.mean_bca.has_value());
  }
}

TEST(Loso, BackendErrorsFailTrialsButAuthAborts) {
  const auto data = alternating();
  EvalConfig c = anchor_config();
  c.tier = PromptTier::Base;
  {
    FakeRemote r({{400, "bad"}, FakeTransport::chat("DECISION: SEIZURE")});
    const auto report = run_loso(c, data, r.resources);
    EXPECT_EQ(report.failed, 1U);
    EXPECT_EQ(report.evaluated, 7U);
    EXPECT_FALSE(report.subjects[0].predictions[0].note.empty());
  }
  {
    FakeRemote r({{401, "no"}});
    EXPECT_THROW(run_loso(c, data, r.resources), AuthenticationError);
  }
}

TEST(Loso, ClassNamesMustMatchDataset) {
  FakeRemote r({FakeTransport::chat("DECISION: SEIZURE")});
  EvalConfig c = anchor_config();
  c.class_names = {"a", "b", "c"};
  EXPECT_THROW(run_loso(c, alternating(), r.resources), ConfigError);
  EvalResources none;
  EXPECT_THROW(run_loso(anchor_config(), alternating(), none), ConfigError);
}

// --- end to end on synthetic data ---------------------------------------------------

TEST(EndToEnd, SeparableDataScoresPerfectly) {
  auto run = testing::synthetic_run(7);
  const auto report = run_loso(run.config);
  EXPECT_TRUE(report.audit.passed());
  EXPECT_GT(report.evaluated, 0U);
  EXPECT_EQ(report.failed, 0U);
  EXPECT_EQ(report.subjects_in_mean, 4U);
  ASSERT_TRUE(report.mean_bca.has_value());
  EXPECT_DOUBLE_EQ(*report.mean_bca, 100.0);
  EXPECT_EQ(report.strategy, "representativeness-similarity");
  EXPECT_EQ(report.backend_id, "mock-nearest-support");
  EXPECT_EQ(report.audit.example_images, 4 * report.audit.bundles);
}

TEST(EndToEnd, WarmRerunsAreIdentical) {
  auto run = testing::synthetic_run(8);
  run.config.cache_dir = run.dir->path() / "cache";
  run.config.jobs = 2;
  const auto cold = run_loso(run.config);
  const auto warm1 = run_loso(run.config);
  const auto warm2 = run_loso(run.config);
  EXPECT_EQ(warm1.to_json(), warm2.to_json());
  EXPECT_EQ(warm1.cache.backend_calls, 0U);
  EXPECT_EQ(warm1.cache.cache_hits, warm1.cache.requests);
  EXPECT_EQ(cold.mean_bca, warm1.mean_bca);
  EXPECT_GT(cold.cache.backend_calls, 0U);
}

TEST(EndToEnd, MissingEmbeddingsAreListed) {
  auto run = testing::synthetic_run(9);
  run.config.render.stroke_px = 2;  // renders no longer match the store
  try {
    run_loso(run.config);
    FAIL() << "expected LookupMiss";
  } catch (const LookupMiss& miss) {
    std::size_t trials = 0;
    for (const auto& pool : run.data.subjects) trials += pool.trials.size();
    EXPECT_EQ(miss.missing().size(), trials);
  }
}

TEST(EndToEnd, AblationSharesTheResponseCache) {
  auto run = testing::synthetic_run(10);
  auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load(run.config.embedding.store));
  FakeRemote r({FakeTransport::chat("DECISION: SEIZURE")}, std::make_shared<FileProvider>(store));
  const std::vector<PromptTier> tiers = {PromptTier::Base, PromptTier::Reasoning, PromptTier::ReasoningExamples};
  const auto reports = run_ablation(run.config, {Strategy::RepresentativenessSimilarity}, tiers, run.data, r.resources);
  ASSERT_EQ(reports.size(), 3U);
  std::set<std::string> digests;
  for (const auto& rep : reports) {
    EXPECT_TRUE(rep.audit.passed());
    for (const auto& s : rep.subjects) {
      for (const auto& p : s.predictions) {
        if (!p.prompt_digest.empty()) digests.insert(p.prompt_digest);
      }
    }
  }
  EXPECT_EQ(reports[0].tier, "base");
  EXPECT_EQ(reports[2].tier, "reasoning-examples");
  EXPECT_LE(r.transport->calls(), digests.size());
  // Every prediction is SEIZURE, so each subject scores 50.
  EXPECT_DOUBLE_EQ(*reports[0].mean_bca, 50.0);

  const std::size_t before = r.transport->calls();
  const auto again = run_ablation(run.config, {Strategy::RepresentativenessSimilarity}, tiers, run.data, r.resources);
  EXPECT_EQ(r.transport->calls(), before);
  for (const auto& rep : again) EXPECT_EQ(rep.cache.backend_calls, 0U);
  const std::string table = ablation_table(again);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
  EXPECT_THROW(run_ablation(run.config, {}, tiers, run.data, r.resources), ConfigError);
}

}  // namespace
}  // namespace waveprompt
