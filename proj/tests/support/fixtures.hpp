// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "waveprompt/dataset.hpp"
#include "waveprompt/digest.hpp"
#include "waveprompt/embedding.hpp"

namespace waveprompt::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("waveprompt-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << text;
}

/// In-memory trial of `channels` x `length` samples produced by fill(c, t).
template <typename Fill>
EegTrial make_trial(const std::string& subject, std::uint32_t index, int label, std::size_t channels,
                    std::size_t length, double rate, Fill fill) {
  SampleMatrix m(channels, length);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < length; ++t) m.at(c, t) = static_cast<float>(fill(c, t));
  }
  auto names = std::make_shared<const std::vector<std::string>>(default_channel_names(channels));
  return EegTrial(subject, index, ClassLabel{label}, rate, names, std::move(m));
}

inline EegTrial constant_trial(const std::string& subject, std::uint32_t index, int label, std::size_t channels = 1,
                               std::size_t length = 4) {
  return make_trial(subject, index, label, channels, length, 4.0,
                    [&](std::size_t c, std::size_t t) { return static_cast<double>(index) + 0.1 * c + 0.01 * t; });
}

/// Dataset of tiny trials (1 channel, 1 s at 4 Hz) with the given labels per
/// subject, trial indices 0..n-1 in order.
inline DatasetManifest labelled_dataset(const std::vector<std::pair<std::string, std::vector<int>>>& subjects,
                                        int num_classes = 2) {
  DatasetManifest m;
  m.dataset_name = "fixture";
  m.num_classes = num_classes;
  m.trial_duration_s = 1.0;
  m.sampling_rate = 4.0;
  m.channel_names = default_channel_names(1);
  for (const auto& [id, labels] : subjects) {
    SubjectPool pool;
    pool.subject_id = id;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pool.trials.push_back(constant_trial(id, static_cast<std::uint32_t>(i), labels[i]));
    }
    m.subjects.push_back(std::move(pool));
  }
  return m;
}

/// Random dataset: `subjects` subjects with 1..max_trials trials, labels
/// uniform over K classes.
inline DatasetManifest random_dataset(std::mt19937_64& gen, std::size_t subjects, std::size_t max_trials,
                                      int num_classes = 2) {
  std::vector<std::pair<std::string, std::vector<int>>> spec;
  std::uniform_int_distribution<std::size_t> count(1, max_trials);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  for (std::size_t s = 0; s < subjects; ++s) {
    std::vector<int> labels(count(gen));
    for (auto& l : labels) l = label(gen);
    spec.emplace_back("P" + std::to_string(s + 1), std::move(labels));
  }
  return labelled_dataset(spec, num_classes);
}

using VectorMap = std::map<TrialRef, std::vector<float>>;

inline std::vector<float> random_vector(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<float> n(0.0F, 1.0F);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(gen);
  return v;
}

inline VectorMap random_vectors(const DatasetManifest& m, std::mt19937_64& gen, std::size_t dim) {
  VectorMap out;
  for (const auto& pool : m.subjects) {
    for (const auto& t : pool.trials) out[t.ref()] = random_vector(gen, dim);
  }
  return out;
}

inline EmbeddingTable table_of(const VectorMap& vectors) {
  EmbeddingTable t;
  for (const auto& [ref, v] : vectors) t.insert(ref, v);
  return t;
}

/// Content address for fixture vectors that have no image.
inline std::string fake_digest(const TrialRef& ref) {
  return sha256_hex(ref.subject_id + "/" + std::to_string(ref.trial_index));
}

}  // namespace waveprompt::testing
