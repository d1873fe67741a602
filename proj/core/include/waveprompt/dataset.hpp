// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace waveprompt {

/// Class index in {0, ..., K-1}. 0 is the non-task (resting / non-seizure) class.
struct ClassLabel {
  int value = 0;

  constexpr bool is_nontask() const noexcept { return value == 0; }
  friend constexpr auto operator<=>(const ClassLabel&, const ClassLabel&) = default;
};

/// Identifies one trial across the whole dataset.
struct TrialRef {
  std::string subject_id;
  std::uint32_t trial_index = 0;

  friend auto operator<=>(const TrialRef&, const TrialRef&) = default;
};

struct TrialRefHash {
  std::size_t operator()(const TrialRef& ref) const noexcept;
};

/// Dense C x T matrix of amplitudes (microvolts), row-major.
class SampleMatrix {
 public:
  SampleMatrix() = default;
  SampleMatrix(std::size_t channels, std::size_t length, float fill = 0.0F);
  SampleMatrix(std::size_t channels, std::size_t length, std::vector<float> data);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t length() const noexcept { return length_; }

  std::span<const float> row(std::size_t c) const { return {data_.data() + c * length_, length_}; }
  std::span<float> row(std::size_t c) { return {data_.data() + c * length_, length_}; }
  float at(std::size_t c, std::size_t t) const { return data_[c * length_ + t]; }
  float& at(std::size_t c, std::size_t t) { return data_[c * length_ + t]; }

  const std::vector<float>& data() const noexcept { return data_; }

  friend bool operator==(const SampleMatrix&, const SampleMatrix&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  std::vector<float> data_;
};

using ChannelNames = std::shared_ptr<const std::vector<std::string>>;

/// One windowed multichannel trial. Copies are cheap: the sample payload is
/// shared and, for trials backed by a file, read on first access.
class EegTrial {
 public:
  EegTrial(std::string subject_id, std::uint32_t trial_index, ClassLabel label, double sampling_rate,
           ChannelNames channel_names, SampleMatrix samples);

  /// File-backed trial. Shape is taken from the already-validated header.
  static EegTrial from_file(std::string subject_id, std::uint32_t trial_index, ClassLabel label,
                            double sampling_rate, ChannelNames channel_names, std::size_t length,
                            std::filesystem::path file);

  const std::string& subject_id() const noexcept { return subject_id_; }
  std::uint32_t trial_index() const noexcept { return trial_index_; }
  ClassLabel label() const noexcept { return label_; }
  double sampling_rate() const noexcept { return sampling_rate_; }
  const std::vector<std::string>& channel_names() const noexcept { return *channel_names_; }
  const ChannelNames& shared_channel_names() const noexcept { return channel_names_; }
  std::size_t channels() const noexcept { return channel_names_->size(); }
  std::size_t length() const noexcept { return length_; }
  TrialRef ref() const { return {subject_id_, trial_index_}; }

  /// Throws DatasetError if a backing file cannot be read.
  const SampleMatrix& samples() const;

  /// Backing file, empty for in-memory trials.
  const std::filesystem::path& file() const;

  EegTrial with_label(ClassLabel label) const;

 private:
  struct Payload;
  EegTrial() = default;

  std::string subject_id_;
  std::uint32_t trial_index_ = 0;
  ClassLabel label_;
  double sampling_rate_ = 0.0;
  ChannelNames channel_names_;
  std::size_t length_ = 0;
  std::shared_ptr<Payload> payload_;
};

/// All trials of one subject in chronological (trial_index) order.
struct SubjectPool {
  std::string subject_id;
  std::vector<EegTrial> trials;

  std::map<int, std::size_t> class_counts() const;
  const EegTrial* find(std::uint32_t trial_index) const;
};

struct DatasetManifest {
  std::string dataset_name;
  int num_classes = 2;
  double trial_duration_s = 4.0;
  double sampling_rate = 250.0;
  std::vector<std::string> channel_names;
  std::vector<SubjectPool> subjects;

  std::size_t total_trials() const;
  std::size_t count_label(ClassLabel label) const;
  const SubjectPool& subject(std::string_view subject_id) const;
  const EegTrial& trial(const TrialRef& ref) const;

  /// Expected samples per trial, duration x rate rounded to nearest.
  std::size_t samples_per_trial() const;

  /// Throws DatasetError describing the first violated invariant.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Trial binary format (little-endian):
//   0  char[4]  magic "WPTR"
//   4  u32      version (1)
//   8  u32      channels C
//  12  u32      samples T
//  16  f64      sampling rate (Hz)
//  24  i32      label
//  28  u32      reserved (0)
//  32  f32[C*T] row-major samples
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kTrialFormatVersion = 1;
inline constexpr std::size_t kTrialHeaderBytes = 32;

struct TrialHeader {
  std::uint32_t version = kTrialFormatVersion;
  std::uint32_t channels = 0;
  std::uint32_t length = 0;
  double sampling_rate = 0.0;
  std::int32_t label = 0;
};

void write_trial_file(const std::filesystem::path& file, const EegTrial& trial);
TrialHeader read_trial_header(const std::filesystem::path& file);
SampleMatrix read_trial_samples(const std::filesystem::path& file);

/// Reads a manifest document and validates every referenced trial header.
/// Sample payloads are loaded lazily.
DatasetManifest load_manifest(const std::filesystem::path& manifest_file);

/// Writes `manifest.json` plus one trial file per trial under `directory`.
/// Returns the manifest path.
std::filesystem::path save_manifest(const DatasetManifest& manifest, const std::filesystem::path& directory);

/// Splits a continuous recording into consecutive non-overlapping windows of
/// round(duration_s * rate) samples. The trailing remainder is dropped.
/// With `sample_labels` (one per sample), each window takes its most frequent
/// label, ties resolved toward the larger label.
std::vector<EegTrial> window_recording(const SampleMatrix& recording, double sampling_rate, double duration_s,
                                       const std::string& subject_id, ChannelNames channel_names,
                                       std::span<const int> sample_labels = {});

struct DownsamplePolicy {
  enum class Kind { None, EveryNthOfClass, EveryNthAll };

  Kind kind = Kind::None;
  std::size_t n = 1;
  std::set<int> classes;

  static DownsamplePolicy none() { return {}; }
  static DownsamplePolicy every_nth_of_class(std::size_t n, std::set<int> classes) {
    return {Kind::EveryNthOfClass, n, std::move(classes)};
  }
  static DownsamplePolicy every_nth_all(std::size_t n) { return {Kind::EveryNthAll, n, {}}; }

  /// "none", "every-nth-all:N", "every-nth-of-class:N:c1,c2".
  static DownsamplePolicy parse(std::string_view text);
  std::string to_string() const;
};

SubjectPool downsample_trials(const SubjectPool& pool, const DownsamplePolicy& policy);
DatasetManifest downsample_dataset(const DatasetManifest& manifest, const DownsamplePolicy& policy);

/// The subject's label-0 trials strictly before `test_trial_index`.
std::vector<EegTrial> historical_pool(const SubjectPool& pool, std::uint32_t test_trial_index);

struct SynthSpec {
  std::string dataset_name = "synthetic";
  std::size_t num_subjects = 4;
  std::vector<std::size_t> trials_per_class = {20, 20};
  std::size_t channels = 18;
  double sampling_rate = 250.0;
  double trial_duration_s = 4.0;
  double noise_uv = 10.0;
  double rhythm_uv = 60.0;
  double rhythm_hz = 3.0;
};

/// Deterministic in (spec, seed). Class-0 trials are low-amplitude noise;
/// class k > 0 adds a k-scaled rhythmic component at `rhythm_hz`. Each
/// subject's recording opens with a run of class-0 trials, the rest are
/// interleaved in seeded order.
DatasetManifest synthesize_dataset(const SynthSpec& spec, std::uint64_t seed);

/// Standard 18-channel longitudinal bipolar montage names, truncated or
/// padded with "CH<n>" to `channels`.
std::vector<std::string> default_channel_names(std::size_t channels);

}  // namespace waveprompt
