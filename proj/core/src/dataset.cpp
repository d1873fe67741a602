// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "waveprompt/error.hpp"
#include "waveprompt/random.hpp"

namespace waveprompt {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::size_t TrialRefHash::operator()(const TrialRef& ref) const noexcept {
  return static_cast<std::size_t>(mix64(fnv1a64(ref.subject_id) ^ ref.trial_index));
}

SampleMatrix::SampleMatrix(std::size_t channels, std::size_t length, float fill)
    : channels_(channels), length_(length), data_(channels * length, fill) {}

SampleMatrix::SampleMatrix(std::size_t channels, std::size_t length, std::vector<float> data)
    : channels_(channels), length_(length), data_(std::move(data)) {
  if (data_.size() != channels * length) {
    throw DatasetError("sample matrix: payload has " + std::to_string(data_.size()) + " values, expected " +
                       std::to_string(channels * length));
  }
}

struct EegTrial::Payload {
  fs::path file;
  std::once_flag once;
  SampleMatrix data;
};

EegTrial::EegTrial(std::string subject_id, std::uint32_t trial_index, ClassLabel label, double sampling_rate,
                   ChannelNames channel_names, SampleMatrix samples)
    : subject_id_(std::move(subject_id)),
      trial_index_(trial_index),
      label_(label),
      sampling_rate_(sampling_rate),
      channel_names_(std::move(channel_names)),
      length_(samples.length()),
      payload_(std::make_shared<Payload>()) {
  if (!channel_names_ || channel_names_->size() != samples.channels()) {
    throw DatasetError("trial " + subject_id_ + "/" + std::to_string(trial_index_) +
                       ": channel name count does not match sample rows");
  }
  if (samples.channels() == 0 || samples.length() == 0) {
    throw DatasetError("trial " + subject_id_ + "/" + std::to_string(trial_index_) + ": empty sample matrix");
  }
  payload_->data = std::move(samples);
  std::call_once(payload_->once, [] {});
}

EegTrial EegTrial::from_file(std::string subject_id, std::uint32_t trial_index, ClassLabel label,
                             double sampling_rate, ChannelNames channel_names, std::size_t length, fs::path file) {
  EegTrial trial;
  trial.subject_id_ = std::move(subject_id);
  trial.trial_index_ = trial_index;
  trial.label_ = label;
  trial.sampling_rate_ = sampling_rate;
  trial.channel_names_ = std::move(channel_names);
  trial.length_ = length;
  trial.payload_ = std::make_shared<Payload>();
  trial.payload_->file = std::move(file);
  return trial;
}

const SampleMatrix& EegTrial::samples() const {
  std::call_once(payload_->once, [this] {
    SampleMatrix m = read_trial_samples(payload_->file);
    if (m.channels() != channels() || m.length() != length_) {
      throw DatasetError("trial file " + payload_->file.string() + " changed shape since the manifest was loaded");
    }
    payload_->data = std::move(m);
  });
  return payload_->data;
}

const fs::path& EegTrial::file() const { return payload_->file; }

EegTrial EegTrial::with_label(ClassLabel label) const {
  EegTrial copy = *this;
  copy.label_ = label;
  return copy;
}

std::map<int, std::size_t> SubjectPool::class_counts() const {
  std::map<int, std::size_t> counts;
  for (const auto& t : trials) ++counts[t.label().value];
  return counts;
}

const EegTrial* SubjectPool::find(std::uint32_t trial_index) const {
  auto it = std::lower_bound(trials.begin(), trials.end(), trial_index,
                             [](const EegTrial& t, std::uint32_t idx) { return t.trial_index() < idx; });
  if (it == trials.end() || it->trial_index() != trial_index) return nullptr;
  return &*it;
}

std::size_t DatasetManifest::total_trials() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.trials.size();
  return n;
}

std::size_t DatasetManifest::count_label(ClassLabel label) const {
  std::size_t n = 0;
  for (const auto& s : subjects) {
    n += static_cast<std::size_t>(
        std::count_if(s.trials.begin(), s.trials.end(), [&](const EegTrial& t) { return t.label() == label; }));
  }
  return n;
}

const SubjectPool& DatasetManifest::subject(std::string_view subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return s;
  }
  throw DatasetError("unknown subject '" + std::string(subject_id) + "'");
}

const EegTrial& DatasetManifest::trial(const TrialRef& ref) const {
  const EegTrial* t = subject(ref.subject_id).find(ref.trial_index);
  if (t == nullptr) {
    throw DatasetError("subject '" + ref.subject_id + "' has no trial " + std::to_string(ref.trial_index));
  }
  return *t;
}

std::size_t DatasetManifest::samples_per_trial() const {
  return static_cast<std::size_t>(std::llround(trial_duration_s * sampling_rate));
}

void DatasetManifest::validate() const {
  if (num_classes < 2) throw DatasetError("num_classes must be >= 2, got " + std::to_string(num_classes));
  if (subjects.size() < 2) {
    throw DatasetError("insufficient subjects: need at least 2 (one test, one auxiliary), got " +
                       std::to_string(subjects.size()));
  }
  if (!(trial_duration_s > 0.0) || !(sampling_rate > 0.0)) {
    throw DatasetError("trial_duration_s and sampling_rate must be positive");
  }
  if (channel_names.empty()) throw DatasetError("channel_names must not be empty");
  std::unordered_set<std::string> names(channel_names.begin(), channel_names.end());
  if (names.size() != channel_names.size()) throw DatasetError("channel_names contains duplicates");

  const double expected = trial_duration_s * sampling_rate;
  std::unordered_set<std::string> subject_ids;
  for (const auto& pool : subjects) {
    if (!subject_ids.insert(pool.subject_id).second) {
      throw DatasetError("duplicate subject_id '" + pool.subject_id + "'");
    }
    for (std::size_t i = 0; i < pool.trials.size(); ++i) {
      const EegTrial& t = pool.trials[i];
      const std::string where = pool.subject_id + "/" + std::to_string(t.trial_index());
      if (t.subject_id() != pool.subject_id) throw DatasetError("trial " + where + " filed under wrong subject");
      if (i > 0 && pool.trials[i - 1].trial_index() >= t.trial_index()) {
        throw DatasetError(pool.trials[i - 1].trial_index() == t.trial_index()
                               ? "duplicate trial_index " + where
                               : "trials of subject " + pool.subject_id + " are not in chronological order");
      }
      if (t.label().value < 0 || t.label().value >= num_classes) {
        throw DatasetError("trial " + where + " has label " + std::to_string(t.label().value) +
                           " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (t.channels() != channel_names.size()) {
        throw DatasetError("channel-count mismatch in trial " + where + ": " + std::to_string(t.channels()) +
                           " vs manifest " + std::to_string(channel_names.size()));
      }
      if (std::abs(static_cast<double>(t.length()) - expected) > 1.0) {
        throw DatasetError("trial " + where + " has " + std::to_string(t.length()) +
                           " samples; duration x rate = " + std::to_string(expected));
      }
    }
  }
}

// --- trial binary format ----------------------------------------------------

namespace {

constexpr char kTrialMagic[4] = {'W', 'P', 'T', 'R'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::string read_file_bytes(const fs::path& file, std::size_t max_bytes = std::string::npos) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError("missing file: " + file.string());
  std::string bytes;
  if (max_bytes == std::string::npos) {
    std::ostringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  } else {
    bytes.resize(max_bytes);
    in.read(bytes.data(), static_cast<std::streamsize>(max_bytes));
    bytes.resize(static_cast<std::size_t>(in.gcount()));
  }
  return bytes;
}

TrialHeader parse_header(const std::string& bytes, const fs::path& file) {
  if (bytes.size() < kTrialHeaderBytes || std::memcmp(bytes.data(), kTrialMagic, 4) != 0) {
    throw DatasetError("not a trial file (bad magic): " + file.string());
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  TrialHeader h;
  h.version = get_le<std::uint32_t>(p + 4);
  h.channels = get_le<std::uint32_t>(p + 8);
  h.length = get_le<std::uint32_t>(p + 12);
  h.sampling_rate = get_le<double>(p + 16);
  h.label = get_le<std::int32_t>(p + 24);
  if (h.version != kTrialFormatVersion) {
    throw DatasetError("unsupported trial format version " + std::to_string(h.version) + ": " + file.string());
  }
  if (h.channels == 0 || h.length == 0) throw DatasetError("trial file declares an empty matrix: " + file.string());
  return h;
}

}  // namespace

void write_trial_file(const fs::path& file, const EegTrial& trial) {
  const SampleMatrix& m = trial.samples();
  std::string out;
  out.reserve(kTrialHeaderBytes + 4 * m.data().size());
  out.append(kTrialMagic, 4);
  put_le<std::uint32_t>(out, kTrialFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.channels()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.length()));
  put_le<double>(out, trial.sampling_rate());
  put_le<std::int32_t>(out, trial.label().value);
  put_le<std::uint32_t>(out, 0);
  for (float v : m.data()) put_le<float>(out, v);

  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write trial file: " + file.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw DatasetError("short write: " + file.string());
}

TrialHeader read_trial_header(const fs::path& file) {
  const TrialHeader h = parse_header(read_file_bytes(file, kTrialHeaderBytes), file);
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  const auto expected = kTrialHeaderBytes + 4ULL * h.channels * h.length;
  if (ec || size != expected) {
    throw DatasetError("trial file " + file.string() + " has " + std::to_string(size) + " bytes, header implies " +
                       std::to_string(expected));
  }
  return h;
}

SampleMatrix read_trial_samples(const fs::path& file) {
  const std::string bytes = read_file_bytes(file);
  const TrialHeader h = parse_header(bytes, file);
  const std::size_t n = static_cast<std::size_t>(h.channels) * h.length;
  if (bytes.size() != kTrialHeaderBytes + 4 * n) throw DatasetError("truncated trial file: " + file.string());
  std::vector<float> data(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kTrialHeaderBytes;
  for (std::size_t i = 0; i < n; ++i) data[i] = get_le<float>(p + 4 * i);
  return SampleMatrix(h.channels, h.length, std::move(data));
}

// --- manifest ---------------------------------------------------------------

DatasetManifest load_manifest(const fs::path& manifest_file) {
  json doc;
  {
    std::ifstream in(manifest_file);
    if (!in) throw DatasetError("missing file: " + manifest_file.string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw DatasetError("malformed manifest " + manifest_file.string() + ": " + e.what());
    }
  }
  const fs::path base = manifest_file.parent_path();

  DatasetManifest m;
  try {
    m.dataset_name = doc.at("dataset_name").get<std::string>();
    m.num_classes = doc.at("num_classes").get<int>();
    m.trial_duration_s = doc.at("trial_duration_s").get<double>();
    m.sampling_rate = doc.at("sampling_rate").get<double>();
    if (doc.contains("channel_names")) {
      m.channel_names = doc.at("channel_names").get<std::vector<std::string>>();
    }
    if (m.num_classes < 2) throw DatasetError("num_classes must be >= 2, got " + std::to_string(m.num_classes));

    ChannelNames names;
    for (const auto& js : doc.at("subjects")) {
      SubjectPool pool;
      pool.subject_id = js.at("subject_id").get<std::string>();
      for (const auto& jt : js.at("trials")) {
        const fs::path file = base / jt.at("file").get<std::string>();
        const auto index = jt.at("trial_index").get<std::uint32_t>();
        const int label = jt.at("label").get<int>();
        const TrialHeader h = read_trial_header(file);
        if (m.channel_names.empty()) m.channel_names = default_channel_names(h.channels);
        if (!names) names = std::make_shared<const std::vector<std::string>>(m.channel_names);
        if (h.channels != m.channel_names.size()) {
          throw DatasetError("channel-count mismatch in " + file.string() + ": header has " +
                             std::to_string(h.channels) + ", manifest declares " +
                             std::to_string(m.channel_names.size()));
        }
        if (h.label != label) {
          throw DatasetError("label mismatch in " + file.string() + ": header " + std::to_string(h.label) +
                             ", manifest " + std::to_string(label));
        }
        if (std::abs(h.sampling_rate - m.sampling_rate) > 1e-9 * m.sampling_rate) {
          throw DatasetError("sampling-rate mismatch in " + file.string());
        }
        pool.trials.push_back(EegTrial::from_file(pool.subject_id, index, ClassLabel{label}, h.sampling_rate, names,
                                                  h.length, file));
      }
      std::stable_sort(pool.trials.begin(), pool.trials.end(),
                       [](const EegTrial& a, const EegTrial& b) { return a.trial_index() < b.trial_index(); });
      m.subjects.push_back(std::move(pool));
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed manifest " + manifest_file.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

fs::path save_manifest(const DatasetManifest& manifest, const fs::path& directory) {
  manifest.validate();
  fs::create_directories(directory);
  json doc;
  doc["dataset_name"] = manifest.dataset_name;
  doc["num_classes"] = manifest.num_classes;
  doc["trial_duration_s"] = manifest.trial_duration_s;
  doc["sampling_rate"] = manifest.sampling_rate;
  doc["channel_names"] = manifest.channel_names;
  doc["subjects"] = json::array();
  for (const auto& pool : manifest.subjects) {
    json js;
    js["subject_id"] = pool.subject_id;
    js["trials"] = json::array();
    for (const auto& t : pool.trials) {
      char name[32];
      std::snprintf(name, sizeof name, "%06u.trial", t.trial_index());
      const fs::path rel = fs::path("trials") / pool.subject_id / name;
      write_trial_file(directory / rel, t);
      js["trials"].push_back({{"file", rel.generic_string()}, {"trial_index", t.trial_index()}, {"label", t.label().value}});
    }
    doc["subjects"].push_back(std::move(js));
  }
  const fs::path out = directory / "manifest.json";
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw DatasetError("cannot write " + out.string());
  os << doc.dump(2) << '\n';
  return out;
}

// --- windowing, downsampling, history ---------------------------------------

std::vector<EegTrial> window_recording(const SampleMatrix& recording, double sampling_rate, double duration_s,
                                       const std::string& subject_id, ChannelNames channel_names,
                                       std::span<const int> sample_labels) {
  const double window_f = duration_s * sampling_rate;
  if (!(window_f >= 1.0)) throw DatasetError("window must span at least one sample");
  const auto window = static_cast<std::size_t>(std::llround(window_f));
  if (!sample_labels.empty() && sample_labels.size() != recording.length()) {
    throw DatasetError("sample_labels length does not match the recording");
  }

  std::vector<EegTrial> out;
  const std::size_t count = recording.length() / window;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    SampleMatrix m(recording.channels(), window);
    for (std::size_t c = 0; c < recording.channels(); ++c) {
      const auto src = recording.row(c).subspan(w * window, window);
      std::copy(src.begin(), src.end(), m.row(c).begin());
    }
    ClassLabel label;
    if (!sample_labels.empty()) {
      std::map<int, std::size_t> votes;
      for (int l : sample_labels.subspan(w * window, window)) ++votes[l];
      std::size_t best = 0;
      for (const auto& [l, n] : votes) {
        if (n >= best) {
          best = n;
          label = ClassLabel{l};
        }
      }
    }
    out.emplace_back(subject_id, static_cast<std::uint32_t>(w), label, sampling_rate, channel_names, std::move(m));
  }
  return out;
}

DownsamplePolicy DownsamplePolicy::parse(std::string_view text) {
  auto parse_n = [&](std::string_view s) {
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("downsample policy: bad step '" + std::string(s) + "'");
    }
    return n;
  };
  auto parse_step = [&](std::string_view s) {
    const std::size_t n = parse_n(s);
    if (n == 0) throw ConfigError("downsample policy: step must be >= 1");
    return n;
  };
  if (text == "none" || text.empty()) return none();
  constexpr std::string_view kAll = "every-nth-all:";
  constexpr std::string_view kClass = "every-nth-of-class:";
  if (text.starts_with(kAll)) return every_nth_all(parse_step(text.substr(kAll.size())));
  if (text.starts_with(kClass)) {
    const auto rest = text.substr(kClass.size());
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw ConfigError("downsample policy: expected every-nth-of-class:N:c1,c2");
    DownsamplePolicy p = every_nth_of_class(parse_step(rest.substr(0, colon)), {});
    std::string_view classes = rest.substr(colon + 1);
    while (!classes.empty()) {
      const auto comma = classes.find(',');
      p.classes.insert(static_cast<int>(parse_n(classes.substr(0, comma))));
      classes = comma == std::string_view::npos ? std::string_view{} : classes.substr(comma + 1);
    }
    if (p.classes.empty()) throw ConfigError("downsample policy: empty class set");
    return p;
  }
  throw ConfigError("unknown downsample policy '" + std::string(text) + "'");
}

std::string DownsamplePolicy::to_string() const {
  switch (kind) {
    case Kind::None:
      return "none";
    case Kind::EveryNthAll:
      return "every-nth-all:" + std::to_string(n);
    case Kind::EveryNthOfClass: {
      std::string s = "every-nth-of-class:" + std::to_string(n) + ":";
      bool first = true;
      for (int c : classes) {
        if (!first) s += ',';
        s += std::to_string(c);
        first = false;
      }
      return s;
    }
  }
  return "none";
}

SubjectPool downsample_trials(const SubjectPool& pool, const DownsamplePolicy& policy) {
  if (policy.kind == DownsamplePolicy::Kind::None) return pool;
  if (policy.n == 0) throw ConfigError("downsample step n must be positive");

  SubjectPool out{pool.subject_id, {}};
  std::size_t position = 0;  // position within the targeted stream
  for (const auto& t : pool.trials) {
    const bool targeted =
        policy.kind == DownsamplePolicy::Kind::EveryNthAll || policy.classes.contains(t.label().value);
    if (!targeted) {
      out.trials.push_back(t);
      continue;
    }
    if (position % policy.n == 0) out.trials.push_back(t);
    ++position;
  }
  return out;
}

DatasetManifest downsample_dataset(const DatasetManifest& manifest, const DownsamplePolicy& policy) {
  DatasetManifest out = manifest;
  for (auto& pool : out.subjects) pool = downsample_trials(pool, policy);
  return out;
}

std::vector<EegTrial> historical_pool(const SubjectPool& pool, std::uint32_t test_trial_index) {
  std::vector<EegTrial> out;
  for (const auto& t : pool.trials) {
    if (t.trial_index() >= test_trial_index) break;
    if (t.label().is_nontask()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> default_channel_names(std::size_t channels) {
  static const std::vector<std::string> kBipolar = {
      "FP1-F7", "F7-T3", "T3-T5", "T5-O1", "FP2-F8", "F8-T4", "T4-T6", "T6-O2", "FP1-F3",
      "F3-C3",  "C3-P3", "P3-O1", "FP2-F4", "F4-C4", "C4-P4", "P4-O2", "FZ-CZ", "CZ-PZ"};
  std::vector<std::string> names;
  names.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    names.push_back(c < kBipolar.size() ? kBipolar[c] : "CH" + std::to_string(c + 1));
  }
  return names;
}

}  // namespace waveprompt
