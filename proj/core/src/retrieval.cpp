// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/retrieval.hpp"

#include <map>

#include <json.hpp>

#include "waveprompt/error.hpp"
#include "waveprompt/geometry.hpp"
#include "waveprompt/random.hpp"

namespace waveprompt {

using nlohmann::json;

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Random:
      return "random";
    case Strategy::RestingStateAnchor:
      return "resting-state-anchor";
    case Strategy::Representativeness:
      return "representativeness";
    case Strategy::RepresentativenessSimilarity:
      return "representativeness-similarity";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "random") return Strategy::Random;
  if (text == "anchor" || text == "resting-state-anchor") return Strategy::RestingStateAnchor;
  if (text == "rep" || text == "representativeness") return Strategy::Representativeness;
  if (text == "rep-sim" || text == "representativeness-similarity") return Strategy::RepresentativenessSimilarity;
  throw ConfigError("unknown selection strategy '" + std::string(text) +
                    "' (expected random, anchor, rep or rep-sim)");
}

void SelectionConfig::validate() const {
  if (shots < 1) throw ConfigError("selection: shots (M) must be >= 1");
}

std::vector<const SupportEntry*> SupportSet::of_class(ClassLabel label) const {
  std::vector<const SupportEntry*> out;
  for (const auto& e : entries) {
    if (e.label == label) out.push_back(&e);
  }
  return out;
}

namespace {

std::vector<SupportEntry> random_draws(std::span<const Candidate> pool, std::size_t shots, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SupportEntry> out;
  for (std::size_t i : sample_without_replacement(pool.size(), shots, rng)) {
    out.push_back({pool[i].ref, pool[i].label, std::nullopt, std::nullopt});
  }
  return out;
}

std::vector<SupportEntry> lowest_scores(std::span<const Candidate> pool, std::span<const double> scores,
                                        std::size_t shots) {
  std::vector<SupportEntry> out;
  for (std::size_t i : smallest_k(scores, shots)) out.push_back({pool[i].ref, pool[i].label, scores[i], std::nullopt});
  return out;
}

std::string class_pool_name(std::string_view what, ClassLabel label) {
  return std::string(what) + " (class " + std::to_string(label.value) + ")";
}

}  // namespace

std::vector<SupportEntry> select_nontask_anchors(std::span<const Candidate> history,
                                                 std::span<const Candidate> auxiliary_nontask, std::size_t shots,
                                                 Strategy strategy, std::uint64_t seed) {
  if (strategy == Strategy::Random) {
    if (auxiliary_nontask.size() < shots) {
      throw InsufficientPool("auxiliary label-0 pool", auxiliary_nontask.size(), shots);
    }
    return random_draws(auxiliary_nontask, shots, seed);
  }
  if (history.empty()) throw EmptyHistoricalPool("test subject has no label-0 trials before the query");
  if (history.size() < shots) throw InsufficientPool("historical pool", history.size(), shots);
  if (strategy == Strategy::RestingStateAnchor) return random_draws(history, shots, seed);

  std::vector<VectorView> views;
  views.reserve(history.size());
  for (const auto& c : history) views.push_back(c.embedding);
  const Centroid center = centroid(views);
  std::vector<double> scores;
  scores.reserve(history.size());
  for (const auto& v : views) scores.push_back(representativeness(v, center));
  return lowest_scores(history, scores, shots);
}

std::vector<Candidate> auxiliary_medoids(const DatasetManifest& dataset, const EmbeddingTable& embeddings,
                                         std::string_view test_subject, ClassLabel label) {
  std::vector<Candidate> out;
  for (const auto& pool : dataset.subjects) {
    if (pool.subject_id == test_subject) continue;
    std::vector<const EegTrial*> members;
    std::vector<VectorView> views;
    for (const auto& t : pool.trials) {
      if (t.label() != label) continue;
      members.push_back(&t);
      views.push_back(embeddings.at(t.ref()));
    }
    if (members.empty()) continue;
    const std::size_t m = medoid(views);
    out.push_back({members[m]->ref(), label, views[m]});
  }
  if (out.empty()) throw InsufficientPool(class_pool_name("auxiliary medoid pool", label), 0, 1);
  return out;
}

std::vector<SupportEntry> select_task_examples(VectorView query, std::span<const Candidate> medoids,
                                               std::span<const Candidate> auxiliary_class, std::size_t shots,
                                               Strategy strategy, std::uint64_t seed) {
  switch (strategy) {
    case Strategy::Random:
    case Strategy::RestingStateAnchor:
      if (auxiliary_class.size() < shots) {
        throw InsufficientPool("auxiliary task-class pool", auxiliary_class.size(), shots);
      }
      return random_draws(auxiliary_class, shots, seed);
    case Strategy::Representativeness:
      if (medoids.size() < shots) throw InsufficientPool("auxiliary medoid pool", medoids.size(), shots);
      return random_draws(medoids, shots, seed);
    case Strategy::RepresentativenessSimilarity: {
      if (medoids.size() < shots) throw InsufficientPool("auxiliary medoid pool", medoids.size(), shots);
      std::vector<double> scores;
      scores.reserve(medoids.size());
      for (const auto& m : medoids) scores.push_back(cosine_distance(m.embedding, query));
      return lowest_scores(medoids, scores, shots);
    }
  }
  throw ConfigError("unhandled strategy");
}

std::uint64_t selection_seed(std::uint64_t rng_seed, const TrialRef& test, ClassLabel label) {
  return derive_seed({rng_seed, fnv1a64(test.subject_id), test.trial_index, static_cast<std::uint64_t>(label.value)});
}

SupportSet build_support_set(const EegTrial& test, const DatasetManifest& dataset, const EmbeddingTable& embeddings,
                             const SelectionConfig& config) {
  config.validate();
  const SubjectPool& own = dataset.subject(test.subject_id());
  if (own.find(test.trial_index()) == nullptr) {
    throw SelectionError("query trial " + test.subject_id() + "/" + std::to_string(test.trial_index()) +
                         " is not part of the dataset");
  }
  const bool random_anchor = config.strategy == Strategy::Random;
  const bool uses_medoids = config.strategy == Strategy::Representativeness ||
                            config.strategy == Strategy::RepresentativenessSimilarity;

  SupportSet support;
  support.config = config;
  support.test = test.ref();
  support.num_classes = dataset.num_classes;

  // Class 0.
  std::vector<Candidate> history;
  std::vector<Candidate> auxiliary_nontask;
  if (random_anchor) {
    for (const auto& pool : dataset.subjects) {
      if (pool.subject_id == test.subject_id()) continue;
      for (const auto& t : pool.trials) {
        if (t.label().is_nontask()) auxiliary_nontask.push_back({t.ref(), t.label(), {}});
      }
    }
  } else {
    for (const auto& t : historical_pool(own, test.trial_index())) {
      history.push_back({t.ref(), t.label(), uses_medoids ? embeddings.at(t.ref()) : VectorView{}});
    }
  }
  support.entries = select_nontask_anchors(history, auxiliary_nontask, config.shots, config.strategy,
                                           selection_seed(config.rng_seed, support.test, ClassLabel{0}));

  // Task classes.
  const VectorView query =
      config.strategy == Strategy::RepresentativenessSimilarity ? embeddings.at(test.ref()) : VectorView{};
  for (int k = 1; k < dataset.num_classes; ++k) {
    const ClassLabel label{k};
    std::vector<Candidate> medoids;
    std::vector<Candidate> auxiliary_class;
    if (uses_medoids) {
      medoids = auxiliary_medoids(dataset, embeddings, test.subject_id(), label);
    } else {
      for (const auto& pool : dataset.subjects) {
        if (pool.subject_id == test.subject_id()) continue;
        for (const auto& t : pool.trials) {
          if (t.label() == label) auxiliary_class.push_back({t.ref(), label, {}});
        }
      }
    }
    auto picked = select_task_examples(query, medoids, auxiliary_class, config.shots, config.strategy,
                                       selection_seed(config.rng_seed, support.test, label));
    support.entries.insert(support.entries.end(), std::make_move_iterator(picked.begin()),
                           std::make_move_iterator(picked.end()));
  }

  const auto violations = audit_support_set(support, dataset.num_classes);
  if (!violations.empty()) throw LeakageViolation("support set invariant broken: " + violations.front());
  return support;
}

std::vector<std::string> audit_support_set(const SupportSet& support, int num_classes) {
  std::vector<std::string> problems;
  std::map<int, std::size_t> per_class;
  int previous_label = 0;
  for (const auto& e : support.entries) {
    ++per_class[e.label.value];
    const std::string where = e.source.subject_id + "/" + std::to_string(e.source.trial_index);
    if (e.label.value < previous_label) problems.push_back("entries not grouped by ascending class at " + where);
    previous_label = e.label.value;
    if (e.source.subject_id != support.test.subject_id) continue;
    if (!e.label.is_nontask()) {
      problems.push_back("task-class entry " + where + " comes from the test subject");
    } else if (e.source.trial_index >= support.test.trial_index) {
      problems.push_back("anchor " + where + " is not before query index " + std::to_string(support.test.trial_index));
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    const std::size_t n = per_class.contains(k) ? per_class.at(k) : 0;
    if (n != support.config.shots) {
      problems.push_back("class " + std::to_string(k) + " has " + std::to_string(n) + " entries, expected " +
                         std::to_string(support.config.shots));
    }
  }
  return problems;
}

void attach_images(SupportSet& support, const DatasetManifest& dataset, const RenderConfig& config) {
  for (auto& e : support.entries) e.image = rasterize(dataset.trial(e.source), config);
}

std::string support_set_to_json(const SupportSet& support) {
  json j;
  j["test"] = {{"subject_id", support.test.subject_id}, {"trial_index", support.test.trial_index}};
  j["strategy"] = to_string(support.config.strategy);
  j["shots"] = support.config.shots;
  j["seed"] = support.config.rng_seed;
  j["num_classes"] = support.num_classes;
  j["entries"] = json::array();
  for (const auto& e : support.entries) {
    json je{{"subject_id", e.source.subject_id},
            {"trial_index", e.source.trial_index},
            {"label", e.label.value},
            {"score", e.selection_score ? json(*e.selection_score) : json(nullptr)}};
    if (e.image) je["image_digest"] = e.image->digest();
    j["entries"].push_back(std::move(je));
  }
  return j.dump(2);
}

}  // namespace waveprompt
