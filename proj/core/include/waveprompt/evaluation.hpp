// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/embedding.hpp"
#include "waveprompt/gateway.hpp"
#include "waveprompt/metrics.hpp"
#include "waveprompt/prompting.hpp"
#include "waveprompt/render.hpp"
#include "waveprompt/retrieval.hpp"

namespace waveprompt {

enum class ParseFailurePolicy { CountAsWrong, Exclude };

std::string_view to_string(ParseFailurePolicy policy);
/// "count-as-wrong", "exclude".
ParseFailurePolicy parse_parse_failure_policy(std::string_view text);

/// Where trial embeddings come from.
struct EmbeddingSource {
  std::string provider = "file";  // "file" or "http"
  std::filesystem::path store;    // file: EmbeddingStore directory
  std::string url;                // http: service base URL
  double timeout_s = 30.0;
};

struct EvalConfig {
  std::filesystem::path manifest;
  RenderConfig render;
  SelectionConfig selection;
  PromptTier tier = PromptTier::ReasoningExamples;
  std::vector<std::string> class_names;  // empty: default_class_names(K)
  std::filesystem::path template_dir;    // empty: default_template_dir()
  BackendConfig backend;
  EmbeddingSource embedding;
  DownsamplePolicy downsample;
  ParseFailurePolicy parse_failure = ParseFailurePolicy::CountAsWrong;
  std::vector<std::string> subjects;  // empty: all
  bool fallback_random = false;
  std::size_t jobs = 1;
  std::filesystem::path cache_dir;  // empty: in-memory response cache
  bool refresh_cache = false;

  void validate() const;
  std::string to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static EvalConfig from_json(const std::string& text);
  std::string digest() const;
};

enum class TrialStatus { Evaluated, Excluded, Skipped, Failed };

std::string_view to_string(TrialStatus status);
TrialStatus parse_trial_status(std::string_view text);

struct SupportRecord {
  TrialRef source;
  int label = 0;
  std::optional<double> score;

  friend bool operator==(const SupportRecord&, const SupportRecord&) = default;
};

struct Prediction {
  std::uint32_t trial_index = 0;
  int true_label = 0;
  /// Parsed model decision; empty on ParseFailure or when not evaluated.
  std::optional<int> predicted;
  /// Label entered into the confusion matrix (differs from `predicted` only
  /// for parse failures counted as wrong).
  std::optional<int> scored_label;
  bool parse_failure = false;
  bool from_cache = false;
  bool fallback = false;
  TrialStatus status = TrialStatus::Evaluated;
  std::string note;
  std::string prompt_digest;
  std::string raw_response;
  std::vector<SupportRecord> support;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct SubjectResult {
  std::string subject_id;
  std::vector<Prediction> predictions;
  ConfusionMatrix confusion;
  /// Empty when a class has no evaluated trial for this subject.
  std::optional<double> bca;
  std::string bca_note;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::size_t parse_failures = 0;
  std::size_t fallbacks = 0;

  friend bool operator==(const SubjectResult&, const SubjectResult&) = default;
};

struct AuditResult {
  std::size_t bundles = 0;
  std::size_t example_images = 0;
  std::vector<std::string> violations;

  bool passed() const noexcept { return violations.empty(); }
  friend bool operator==(const AuditResult&, const AuditResult&) = default;
};

struct CacheStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;

  friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

struct EvalReport {
  std::string config_json;
  std::string config_digest;
  std::string template_version;
  std::string render_digest;
  std::string embedding_model;
  std::string backend_id;
  std::string strategy;
  std::string tier;
  std::vector<std::string> class_names;

  std::vector<SubjectResult> subjects;
  /// Unweighted mean of the per-subject BCAs that are defined.
  std::optional<double> mean_bca;
  std::size_t subjects_in_mean = 0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::size_t parse_failures = 0;
  std::size_t fallbacks = 0;

  CacheStats cache;
  AuditResult audit;
  /// Reserved for externally computed baseline scores (name -> BCA %).
  std::map<std::string, double> external_baselines;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  /// One row per prediction.
  std::string to_csv() const;
  /// Short human-readable summary.
  std::string summary() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Fills confusion, BCA and counts for each subject and the aggregate from
/// the predictions.
void finalize_report(EvalReport& report, int num_classes);

/// Scans a bundle's example images against the held-out query: no task-class
/// image from the test subject, no test-subject anchor at or after the query.
void audit_bundle(const PromptBundle& bundle, const DatasetManifest& dataset, AuditResult& audit);

/// Thread-safe memo of rendered images, up to `capacity` entries (renders
/// past that are returned but not kept).
class RenderCache {
 public:
  explicit RenderCache(std::size_t capacity = 4096) : capacity_(capacity) {}
  WaveformImage get(const EegTrial& trial, const RenderConfig& config);

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::map<std::pair<TrialRef, std::string>, WaveformImage> images_;
};

/// Shared machinery for one or more evaluation runs.
struct EvalResources {
  std::shared_ptr<EmbeddingProvider> provider;
  std::shared_ptr<EmbeddingCache> embedding_cache;
  std::shared_ptr<VlmGateway> gateway;
  std::shared_ptr<RenderCache> renders;
};

/// Builds the embedding provider, response cache and gateway described by
/// `config`. Fails before any work is done (missing API key, unreachable
/// embedding service, missing store).
EvalResources make_resources(const EvalConfig& config);

/// Selects the held-out subjects and applies the downsampling policy.
DatasetManifest prepare_dataset(const DatasetManifest& dataset, const EvalConfig& config);

/// Embeddings of every trial under config.render. Throws LookupMiss listing
/// every missing digest.
EmbeddingTable embed_dataset(const DatasetManifest& dataset, const RenderConfig& render, EvalResources& resources,
                             std::size_t jobs);

/// Leave-one-subject-out evaluation over an already prepared dataset.
EvalReport run_loso(const EvalConfig& config, const DatasetManifest& dataset, EvalResources& resources,
                    const EmbeddingTable* embeddings = nullptr);

/// Loads the manifest and builds resources from `config`.
EvalReport run_loso(const EvalConfig& config);

/// Every (strategy, tier) combination in order, sharing caches.
std::vector<EvalReport> run_ablation(const EvalConfig& base, const std::vector<Strategy>& strategies,
                                     const std::vector<PromptTier>& tiers, const DatasetManifest& dataset,
                                     EvalResources& resources);

/// CSV comparison table, one row per report.
std::string ablation_table(const std::vector<EvalReport>& reports);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace waveprompt
