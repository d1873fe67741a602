// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/embedding.hpp"
#include "waveprompt/render.hpp"

namespace waveprompt {

/// How few-shot examples are chosen, weakest to strongest.
///
///   Random                         class 0: random auxiliary label-0 trials
///                                  class k: random auxiliary class-k trials
///   RestingStateAnchor             class 0: random draws from the test subject's history
///                                  class k: random auxiliary class-k trials
///   Representativeness             class 0: history trials nearest the history centroid
///                                  class k: random draws from per-subject class-k medoids
///   RepresentativenessSimilarity   class 0: as Representativeness
///                                  class k: medoids nearest the query embedding
enum class Strategy { Random, RestingStateAnchor, Representativeness, RepresentativenessSimilarity };

std::string_view to_string(Strategy strategy);
/// Accepts "random", "anchor", "rep", "rep-sim" and the full kebab-case names.
Strategy parse_strategy(std::string_view text);

struct SelectionConfig {
  std::size_t shots = 2;  // examples per class
  Strategy strategy = Strategy::RepresentativenessSimilarity;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct SupportEntry {
  TrialRef source;
  ClassLabel label;
  /// m_rep for class-0 anchors picked by centroid distance, m_sim for task
  /// medoids picked by query distance; empty for random draws.
  std::optional<double> selection_score;
  /// Filled by attach_images(); selection itself works on references.
  std::optional<WaveformImage> image;
};

struct SupportSet {
  std::vector<SupportEntry> entries;  // class 0 first, then 1, ...
  SelectionConfig config;
  TrialRef test;
  int num_classes = 2;

  std::vector<const SupportEntry*> of_class(ClassLabel label) const;
};

/// A trial as seen by the selectors: its reference, label and embedding.
struct Candidate {
  TrialRef ref;
  ClassLabel label;
  VectorView embedding;
};

/// Class-0 anchors.
///   history              the test subject's label-0 trials before the query
///   auxiliary_nontask    every auxiliary subject's label-0 trials (Random only)
/// Throws EmptyHistoricalPool / InsufficientPool.
std::vector<SupportEntry> select_nontask_anchors(std::span<const Candidate> history,
                                                 std::span<const Candidate> auxiliary_nontask, std::size_t shots,
                                                 Strategy strategy, std::uint64_t seed);

/// One medoid per auxiliary subject that has class-k trials, in manifest
/// order. Throws InsufficientPool when no subject contributes.
std::vector<Candidate> auxiliary_medoids(const DatasetManifest& dataset, const EmbeddingTable& embeddings,
                                         std::string_view test_subject, ClassLabel label);

/// Task-class examples.
///   medoids            output of auxiliary_medoids()
///   auxiliary_class    every auxiliary class-k trial (Random, RestingStateAnchor)
std::vector<SupportEntry> select_task_examples(VectorView query, std::span<const Candidate> medoids,
                                               std::span<const Candidate> auxiliary_class, std::size_t shots,
                                               Strategy strategy, std::uint64_t seed);

/// Seed for the random draws of one (query, class) pair.
std::uint64_t selection_seed(std::uint64_t rng_seed, const TrialRef& test, ClassLabel label);

/// Builds S for one query: the test subject contributes only label-0 trials
/// strictly before the query; every other subject is auxiliary. The result is
/// checked with audit_support_set() before it is returned.
SupportSet build_support_set(const EegTrial& test, const DatasetManifest& dataset, const EmbeddingTable& embeddings,
                             const SelectionConfig& config);

/// Returns a description of every invariant the set breaks (empty if none):
/// entry count per class, task-class entries from the test subject, and
/// test-subject anchors at or after the query.
std::vector<std::string> audit_support_set(const SupportSet& support, int num_classes);

/// Renders every entry's image with `config` (the query's configuration).
void attach_images(SupportSet& support, const DatasetManifest& dataset, const RenderConfig& config);

/// JSON descriptor: entries by reference, labels and scores.
std::string support_set_to_json(const SupportSet& support);

}  // namespace waveprompt
