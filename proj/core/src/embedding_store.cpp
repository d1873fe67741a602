// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "waveprompt/embedding.hpp"
#include "waveprompt/error.hpp"

namespace waveprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kStoreMagic[4] = {'W', 'P', 'E', 'M'};
constexpr std::uint32_t kStoreVersion = 1;
constexpr std::size_t kDigestChars = 64;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

bool is_hex_digest(std::string_view s) {
  return s.size() == kDigestChars &&
         s.find_first_not_of("0123456789abcdef") == std::string_view::npos;
}

}  // namespace

void check_embedding_vector(std::span<const float> vector, std::size_t declared_dimension, std::string_view origin) {
  if (vector.size() != declared_dimension) {
    throw ContractViolation(std::string(origin) + ": vector has dimension " + std::to_string(vector.size()) +
                            ", provider declares " + std::to_string(declared_dimension));
  }
  bool nonzero = false;
  for (float v : vector) {
    if (!std::isfinite(v)) throw ContractViolation(std::string(origin) + ": non-finite component");
    nonzero = nonzero || v != 0.0F;
  }
  if (!nonzero) throw ContractViolation(std::string(origin) + ": all-zero vector");
}

// --- EmbeddingStore -------------------------------------------------------------

EmbeddingStore::EmbeddingStore(std::string provider_id, std::string model_id, std::size_t dimension)
    : provider_id_(std::move(provider_id)), model_id_(std::move(model_id)), dimension_(dimension) {
  if (dimension_ == 0) throw EmbeddingError("embedding store: dimension must be positive");
}

EmbeddingStore::EmbeddingStore(EmbeddingStore&& other) noexcept
    : provider_id_(std::move(other.provider_id_)),
      model_id_(std::move(other.model_id_)),
      dimension_(other.dimension_),
      vectors_(std::move(other.vectors_)),
      index_(std::move(other.index_)) {}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mutex_);
  return vectors_.size();
}

std::optional<std::vector<float>> EmbeddingStore::find(const std::string& digest) const {
  std::shared_lock lock(mutex_);
  auto it = vectors_.find(digest);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::put(const std::string& digest, std::vector<float> vector) {
  if (!is_hex_digest(digest)) throw EmbeddingError("embedding store: malformed digest '" + digest + "'");
  check_embedding_vector(vector, dimension_, "embedding store");
  std::unique_lock lock(mutex_);
  vectors_[digest] = std::move(vector);
}

void EmbeddingStore::index(const TrialRef& trial, const std::string& config_digest, const std::string& digest) {
  std::unique_lock lock(mutex_);
  index_[IndexKey{trial, config_digest}] = digest;
}

std::optional<std::string> EmbeddingStore::lookup(const TrialRef& trial, const std::string& config_digest) const {
  std::shared_lock lock(mutex_);
  auto it = index_.find(IndexKey{trial, config_digest});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, std::vector<float>>> EmbeddingStore::records() const {
  std::shared_lock lock(mutex_);
  return {vectors_.begin(), vectors_.end()};
}

std::vector<std::pair<EmbeddingStore::IndexKey, std::string>> EmbeddingStore::index_entries() const {
  std::shared_lock lock(mutex_);
  return {index_.begin(), index_.end()};
}

void EmbeddingStore::save(const fs::path& directory) const {
  fs::create_directories(directory);
  std::shared_lock lock(mutex_);
  {
    json meta{{"provider_id", provider_id_}, {"model_id", model_id_}, {"dimension", dimension_}};
    std::ofstream os(directory / "store.json", std::ios::trunc);
    os << meta.dump(2) << '\n';
    if (!os) throw EmbeddingError("cannot write " + (directory / "store.json").string());
  }
  {
    std::string out(kStoreMagic, 4);
    put_u32(out, kStoreVersion);
    for (const auto& [digest, vec] : vectors_) {
      out += digest;
      put_u32(out, static_cast<std::uint32_t>(vec.size()));
      for (float v : vec) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream os(directory / "vectors.bin", std::ios::binary | std::ios::trunc);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw EmbeddingError("cannot write " + (directory / "vectors.bin").string());
  }
  {
    std::ofstream os(directory / "index.tsv", std::ios::trunc);
    for (const auto& [key, digest] : index_) {
      os << key.trial.subject_id << '\t' << key.trial.trial_index << '\t' << key.config_digest << '\t' << digest
         << '\n';
    }
    if (!os) throw EmbeddingError("cannot write " + (directory / "index.tsv").string());
  }
}

EmbeddingStore EmbeddingStore::load(const fs::path& directory) {
  json meta;
  {
    std::ifstream in(directory / "store.json");
    if (!in) throw EmbeddingError("no embedding store at " + directory.string() + " (store.json missing)");
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw EmbeddingError("malformed store.json: " + std::string(e.what()));
    }
  }
  EmbeddingStore store(meta.at("provider_id").get<std::string>(), meta.at("model_id").get<std::string>(),
                       meta.at("dimension").get<std::size_t>());

  if (std::ifstream in{directory / "vectors.bin", std::ios::binary}) {
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kStoreMagic, 4) != 0 || get_u32(p + 4) != kStoreVersion) {
      throw EmbeddingError("vectors.bin: bad magic or version");
    }
    std::size_t pos = 8;
    while (pos < bytes.size()) {
      if (pos + kDigestChars + 4 > bytes.size()) throw EmbeddingError("vectors.bin: truncated record header");
      std::string digest = bytes.substr(pos, kDigestChars);
      const std::uint32_t dim = get_u32(p + pos + kDigestChars);
      pos += kDigestChars + 4;
      if (pos + 4ULL * dim > bytes.size()) throw EmbeddingError("vectors.bin: truncated record payload");
      std::vector<float> vec(dim);
      for (std::uint32_t i = 0; i < dim; ++i) vec[i] = std::bit_cast<float>(get_u32(p + pos + 4ULL * i));
      pos += 4ULL * dim;
      store.put(digest, std::move(vec));
    }
  }

  if (std::ifstream in{directory / "index.tsv"}) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string subject, index, config, digest;
      if (!std::getline(fields, subject, '\t') || !std::getline(fields, index, '\t') ||
          !std::getline(fields, config, '\t') || !std::getline(fields, digest)) {
        throw EmbeddingError("index.tsv: malformed line '" + line + "'");
      }
      store.index(TrialRef{subject, static_cast<std::uint32_t>(std::stoul(index))}, config, digest);
    }
  }
  return store;
}

EmbeddingStore EmbeddingStore::open_or_create(const fs::path& directory, std::string provider_id,
                                              std::string model_id, std::size_t dimension) {
  if (fs::exists(directory / "store.json")) return load(directory);
  return EmbeddingStore(std::move(provider_id), std::move(model_id), dimension);
}

// --- providers and caches -----------------------------------------------------

FileProvider::FileProvider(std::shared_ptr<const EmbeddingStore> store) : store_(std::move(store)) {
  if (!store_) throw ProviderUnavailable("file provider: no store loaded");
}

std::vector<float> FileProvider::compute(const WaveformImage& image) {
  const std::string digest = image.digest();
  auto vec = store_->find(digest);
  if (!vec) throw LookupMiss({digest});
  return std::move(*vec);
}

std::optional<Embedding> EmbeddingCache::find(const std::string& digest) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void EmbeddingCache::insert(const Embedding& embedding) {
  std::unique_lock lock(mutex_);
  entries_.emplace(embedding.source_digest, embedding);
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t EmbeddingCache::hits() const { return hits_.load(); }
std::size_t EmbeddingCache::misses() const { return misses_.load(); }

Embedding embed(const WaveformImage& image, EmbeddingProvider& provider, EmbeddingCache& cache) {
  const std::string digest = image.digest();
  if (auto hit = cache.find(digest)) return std::move(*hit);
  Embedding e;
  e.vector = provider.compute(image);
  check_embedding_vector(e.vector, provider.dimension(), provider.provider_id());
  e.provider_id = provider.provider_id();
  e.model_id = provider.model_id();
  e.source_digest = digest;
  cache.insert(e);
  return e;
}

std::vector<Embedding> embed_all(std::span<const WaveformImage> images, EmbeddingProvider& provider,
                                 EmbeddingCache& cache) {
  std::vector<Embedding> out;
  std::vector<std::string> missing;
  out.reserve(images.size());
  for (const auto& image : images) {
    try {
      out.push_back(embed(image, provider, cache));
    } catch (const LookupMiss& miss) {
      missing.insert(missing.end(), miss.missing().begin(), miss.missing().end());
    }
  }
  if (!missing.empty()) throw LookupMiss(std::move(missing));
  return out;
}

void EmbeddingTable::insert(const TrialRef& trial, std::vector<float> vector) {
  vectors_.insert_or_assign(trial, std::move(vector));
}

bool EmbeddingTable::contains(const TrialRef& trial) const { return vectors_.contains(trial); }

VectorView EmbeddingTable::at(const TrialRef& trial) const {
  auto it = vectors_.find(trial);
  if (it == vectors_.end()) {
    throw EmbeddingError("no embedding for trial " + trial.subject_id + "/" + std::to_string(trial.trial_index));
  }
  return it->second;
}

EmbeddingTable EmbeddingTable::from_store(const DatasetManifest& manifest, const EmbeddingStore& store,
                                          const std::string& config_digest) {
  EmbeddingTable table;
  std::vector<std::string> missing;
  for (const auto& pool : manifest.subjects) {
    for (const auto& t : pool.trials) {
      const auto digest = store.lookup(t.ref(), config_digest);
      if (!digest) {
        missing.push_back("(unindexed) " + t.subject_id() + "/" + std::to_string(t.trial_index()));
        continue;
      }
      auto vec = store.find(*digest);
      if (!vec) {
        missing.push_back(*digest);
        continue;
      }
      table.insert(t.ref(), std::move(*vec));
    }
  }
  if (!missing.empty()) throw LookupMiss(std::move(missing));
  return table;
}

}  // namespace waveprompt
