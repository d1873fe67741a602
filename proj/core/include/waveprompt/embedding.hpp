// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/geometry.hpp"
#include "waveprompt/render.hpp"

namespace waveprompt {

/// f(image): a fixed-dimension vector plus where it came from.
struct Embedding {
  std::vector<float> vector;
  std::string provider_id;
  std::string model_id;
  std::string source_digest;  // SHA-256 of the embedded PNG bytes

  std::size_t dimension() const noexcept { return vector.size(); }
  VectorView view() const noexcept { return vector; }
};

/// Rejects non-finite and all-zero vectors and checks the declared dimension.
/// Throws ContractViolation.
void check_embedding_vector(std::span<const float> vector, std::size_t declared_dimension, std::string_view origin);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string provider_id() const = 0;
  virtual std::string model_id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual bool deterministic() const = 0;

  /// Raw encoder output for the image. Must be safe to call concurrently.
  virtual std::vector<float> compute(const WaveformImage& image) = 0;
};

/// Digest-keyed vectors on disk.
///
/// Directory layout:
///   store.json   {"provider_id", "model_id", "dimension"}
///   vectors.bin  "WPEM", u32 version, then records of
///                64 ASCII hex digest bytes, u32 D, D x f32 (all little-endian)
///   index.tsv    subject_id <TAB> trial_index <TAB> config_digest <TAB> digest
///
/// Later records for the same digest replace earlier ones on load.
class EmbeddingStore {
 public:
  struct IndexKey {
    TrialRef trial;
    std::string config_digest;
    friend auto operator<=>(const IndexKey&, const IndexKey&) = default;
  };

  EmbeddingStore(std::string provider_id, std::string model_id, std::size_t dimension);
  EmbeddingStore(EmbeddingStore&& other) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) = delete;

  static EmbeddingStore load(const std::filesystem::path& directory);
  /// Loads `directory` when it holds a store, otherwise returns an empty store
  /// with the given metadata.
  static EmbeddingStore open_or_create(const std::filesystem::path& directory, std::string provider_id,
                                       std::string model_id, std::size_t dimension);
  void save(const std::filesystem::path& directory) const;

  const std::string& provider_id() const noexcept { return provider_id_; }
  const std::string& model_id() const noexcept { return model_id_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const;

  std::optional<std::vector<float>> find(const std::string& digest) const;
  /// Throws ContractViolation on a dimension mismatch or degenerate vector.
  void put(const std::string& digest, std::vector<float> vector);

  void index(const TrialRef& trial, const std::string& config_digest, const std::string& digest);
  std::optional<std::string> lookup(const TrialRef& trial, const std::string& config_digest) const;

  /// Snapshot in digest order.
  std::vector<std::pair<std::string, std::vector<float>>> records() const;
  std::vector<std::pair<IndexKey, std::string>> index_entries() const;

 private:
  std::string provider_id_;
  std::string model_id_;
  std::size_t dimension_ = 0;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<float>> vectors_;
  std::map<IndexKey, std::string> index_;
};

/// Serves precomputed vectors from an EmbeddingStore. compute() throws
/// LookupMiss for digests not in the store.
class FileProvider final : public EmbeddingProvider {
 public:
  explicit FileProvider(std::shared_ptr<const EmbeddingStore> store);

  std::string provider_id() const override { return "file:" + store_->provider_id(); }
  std::string model_id() const override { return store_->model_id(); }
  std::size_t dimension() const override { return store_->dimension(); }
  bool deterministic() const override { return true; }
  std::vector<float> compute(const WaveformImage& image) override;

 private:
  std::shared_ptr<const EmbeddingStore> store_;
};

/// In-process digest -> Embedding cache. Concurrent readers, exclusive writers;
/// entries are inserted whole so readers never see partial vectors.
class EmbeddingCache {
 public:
  std::optional<Embedding> find(const std::string& digest) const;
  void insert(const Embedding& embedding);
  std::size_t size() const;
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Embedding> entries_;
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> misses_{0};
};

/// Embeds one image, consulting `cache` (by image digest) first.
Embedding embed(const WaveformImage& image, EmbeddingProvider& provider, EmbeddingCache& cache);

/// Embeds every image; gathers all lookup misses into a single LookupMiss.
std::vector<Embedding> embed_all(std::span<const WaveformImage> images, EmbeddingProvider& provider,
                                 EmbeddingCache& cache);

/// Per-trial embeddings for one render configuration; the retrieval input.
class EmbeddingTable {
 public:
  void insert(const TrialRef& trial, std::vector<float> vector);
  bool contains(const TrialRef& trial) const;
  /// Throws EmbeddingError when the trial has no embedding.
  VectorView at(const TrialRef& trial) const;
  std::size_t size() const noexcept { return vectors_.size(); }

  /// Table for every trial of `manifest` resolved through the store index.
  /// Throws LookupMiss listing every unresolved digest.
  static EmbeddingTable from_store(const DatasetManifest& manifest, const EmbeddingStore& store,
                                   const std::string& config_digest);

 private:
  std::unordered_map<TrialRef, std::vector<float>, TrialRefHash> vectors_;
};

}  // namespace waveprompt
