// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "waveprompt/dataset.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/random.hpp"

namespace waveprompt {

namespace {

SampleMatrix synth_trial(const SynthSpec& spec, std::size_t length, int label, double subject_gain, Rng& rng) {
  SampleMatrix m(spec.channels, length);
  const double amplitude = spec.rhythm_uv * label;
  for (std::size_t c = 0; c < spec.channels; ++c) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform01();
    // Rhythm strength varies per channel so the discharge looks focal-to-generalised.
    const double channel_gain = 0.6 + 0.8 * rng.uniform01();
    auto row = m.row(c);
    for (std::size_t t = 0; t < length; ++t) {
      const double time = static_cast<double>(t) / spec.sampling_rate;
      double v = spec.noise_uv * subject_gain * rng.normal();
      if (label > 0) v += amplitude * channel_gain * std::sin(2.0 * std::numbers::pi * spec.rhythm_hz * time + phase);
      row[t] = static_cast<float>(v);
    }
  }
  return m;
}

}  // namespace

DatasetManifest synthesize_dataset(const SynthSpec& spec, std::uint64_t seed) {
  const std::size_t per_subject = std::accumulate(spec.trials_per_class.begin(), spec.trials_per_class.end(), std::size_t{0});
  if (per_subject == 0 || spec.num_subjects == 0) throw DatasetError("synthesize_dataset: zero trials requested");
  if (spec.trials_per_class.size() < 2) throw DatasetError("synthesize_dataset: need counts for at least 2 classes");
  if (spec.channels == 0) throw DatasetError("synthesize_dataset: zero channels");

  DatasetManifest m;
  m.dataset_name = spec.dataset_name;
  m.num_classes = static_cast<int>(spec.trials_per_class.size());
  m.sampling_rate = spec.sampling_rate;
  m.trial_duration_s = spec.trial_duration_s;
  m.channel_names = default_channel_names(spec.channels);
  const auto names = std::make_shared<const std::vector<std::string>>(m.channel_names);
  const std::size_t length = m.samples_per_trial();
  if (length == 0) throw DatasetError("synthesize_dataset: trial shorter than one sample");

  for (std::size_t s = 0; s < spec.num_subjects; ++s) {
    char id[16];
    std::snprintf(id, sizeof id, "S%02zu", s + 1);
    Rng rng(derive_seed({seed, fnv1a64(id)}));

    // Chronology: a lead-in of resting trials, then the remainder in seeded order.
    const std::size_t n0 = spec.trials_per_class[0];
    const std::size_t lead = std::min(n0, std::max<std::size_t>(4, n0 / 4));
    std::vector<int> tail;
    for (std::size_t k = 0; k < spec.trials_per_class.size(); ++k) {
      const std::size_t n = k == 0 ? n0 - lead : spec.trials_per_class[k];
      tail.insert(tail.end(), n, static_cast<int>(k));
    }
    const auto order = sample_without_replacement(tail.size(), tail.size(), rng);
    std::vector<int> labels(lead, 0);
    for (std::size_t i : order) labels.push_back(tail[i]);

    const double subject_gain = 0.8 + 0.4 * rng.uniform01();
    SubjectPool pool{id, {}};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pool.trials.emplace_back(id, static_cast<std::uint32_t>(i), ClassLabel{labels[i]}, spec.sampling_rate, names,
                               synth_trial(spec, length, labels[i], subject_gain, rng));
    }
    m.subjects.push_back(std::move(pool));
  }
  if (m.subjects.size() >= 2) m.validate();
  return m;
}

}  // namespace waveprompt
