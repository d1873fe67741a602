// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>

#include "waveprompt/embedding.hpp"
#include "waveprompt/http.hpp"
#include "waveprompt/prompting.hpp"

namespace waveprompt {

enum class BackendKind { RemoteChat, MockNearestSupport };

std::string_view to_string(BackendKind kind);
/// "remote-chat", "mock" / "mock-nearest-support".
BackendKind parse_backend_kind(std::string_view text);

struct BackendConfig {
  BackendKind kind = BackendKind::MockNearestSupport;
  /// Full chat-completions URL, e.g. https://host/v1/chat/completions.
  std::string endpoint;
  std::string model = "mock-nearest-support";
  /// Name of the environment variable holding the API key; never the key.
  std::string api_key_env = "WAVEPROMPT_API_KEY";
  double temperature = 0.0;
  /// Audit flag required for any temperature other than 0.
  bool allow_nonzero_temperature = false;
  int max_retries = 4;
  /// Issued (non-cached) requests per sliding 60 s window; 0 disables the cap.
  int requests_per_minute = 60;
  double timeout_s = 120.0;
  double backoff_initial_s = 1.0;
  double backoff_max_s = 30.0;
  std::size_t max_in_flight = 4;
  int max_tokens = 1024;

  void validate() const;
  /// "remote-chat:<model>@<endpoint>" or "mock-nearest-support".
  std::string backend_id() const;
  std::string to_json() const;
  static BackendConfig from_json(const std::string& text);
  static BackendConfig load(const std::filesystem::path& file);
};

/// Seconds on a monotonic axis plus a way to wait on it. Tests use
/// SimulatedClock so backoff and rate limiting run instantly.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_s() = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SystemClock final : public Clock {
 public:
  double now_s() override;
  void sleep_for(double seconds) override;
};

/// Time only moves when someone sleeps or calls advance().
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(double start_s = 0.0) : now_(start_s) {}
  double now_s() override;
  void sleep_for(double seconds) override;
  void advance(double seconds);
  double total_slept() const;

 private:
  mutable std::mutex mutex_;
  double now_;
  double slept_ = 0.0;
};

/// Sliding-window cap: at most `per_minute` acquisitions in any 60 s window.
class RateLimiter {
 public:
  RateLimiter(int per_minute, std::shared_ptr<Clock> clock);
  /// Blocks (via the clock) until a slot is free, then records the issue time.
  void acquire();
  /// Issue times recorded so far, oldest first (bounded to the live window).
  std::deque<double> window() const;

 private:
  int per_minute_;
  std::shared_ptr<Clock> clock_;
  mutable std::mutex mutex_;
  std::deque<double> issued_;
};

struct CacheRecord {
  std::string request_digest;
  std::string model;
  std::string timestamp;  // UTC, ISO 8601
  std::string raw_response;
  bool refreshed = false;  // written by a --no-cache run
};

/// Responses keyed by (prompt digest, model). On disk: <dir>/<digest>.jsonl,
/// one JSON record per line, append-only; the last record for a model wins.
/// Without a directory the cache lives in memory only.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path directory);

  std::optional<CacheRecord> find(const std::string& digest, const std::string& model) const;
  void store(const CacheRecord& record);
  std::size_t size() const;
  const std::optional<std::filesystem::path>& directory() const noexcept { return directory_; }

 private:
  using Key = std::pair<std::string, std::string>;
  std::optional<std::filesystem::path> directory_;
  mutable std::shared_mutex mutex_;
  mutable std::map<Key, CacheRecord> memory_;
  mutable std::map<std::string, bool> loaded_;
  void load_file_locked(const std::string& digest) const;
};

struct VlmResponse {
  std::string raw_text;
  Decision decision;
  double latency_ms = 0.0;
  std::string backend_id;
  bool from_cache = false;
  std::string prompt_digest;
  int attempts = 0;
};

struct GatewayStats {
  std::size_t requests = 0;       // classify() calls
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;  // attempts sent to the backend, retries included
  std::size_t retries = 0;
};

/// Cosine-nearest support example to the query, by embedding of each image's
/// PNG. Ties go to the earlier example. Raw text is "DECISION: <class>".
/// Throws PromptError when the bundle has no examples.
VlmResponse mock_classify(const PromptBundle& bundle, EmbeddingProvider& provider, EmbeddingCache& cache);

/// Executes prompt bundles against one backend with caching, retries with
/// exponential backoff, a rate cap and a bounded number of requests in flight.
class VlmGateway {
 public:
  struct Options {
    std::shared_ptr<ResponseCache> cache;
    std::shared_ptr<HttpTransport> transport;  // RemoteChat
    std::shared_ptr<Clock> clock;
    std::shared_ptr<EmbeddingProvider> mock_provider;  // MockNearestSupport
    std::shared_ptr<EmbeddingCache> mock_cache;
    /// Ignore cached responses and overwrite them (audited in the record).
    bool refresh = false;
  };

  /// Validates the config. For RemoteChat the API key environment variable
  /// must be set (AuthenticationError otherwise).
  VlmGateway(BackendConfig config, Options options);

  VlmResponse classify(const PromptBundle& bundle);

  const BackendConfig& config() const noexcept { return config_; }
  /// Key under which responses are cached; includes the mock's provider.
  const std::string& cache_model() const noexcept { return cache_model_; }
  GatewayStats stats() const;

  /// OpenAI-compatible chat-completions request body.
  static std::string chat_request_body(const PromptBundle& bundle, const BackendConfig& config);
  /// choices[0].message.content; throws MalformedReply.
  static std::string chat_reply_text(const std::string& body);

 private:
  std::string call_backend(const PromptBundle& bundle, int& attempts);
  std::string call_remote(const PromptBundle& bundle, int& attempts);

  BackendConfig config_;
  Options options_;
  std::string api_key_;
  std::string cache_model_;
  std::unique_ptr<RateLimiter> limiter_;

  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;

  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace waveprompt
