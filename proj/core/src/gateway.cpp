// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "waveprompt/digest.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/geometry.hpp"

namespace waveprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kWindowS = 60.0;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_transient(int status) { return status == 429 || (status >= 500 && status <= 599); }

}  // namespace

// --- config ----------------------------------------------------------------------

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::RemoteChat ? "remote-chat" : "mock-nearest-support";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "remote-chat" || text == "remote") return BackendKind::RemoteChat;
  if (text == "mock" || text == "mock-nearest-support") return BackendKind::MockNearestSupport;
  throw ConfigError("unknown backend kind '" + std::string(text) + "' (expected remote-chat or mock)");
}

void BackendConfig::validate() const {
  if (temperature != 0.0 && !allow_nonzero_temperature) {
    throw ConfigError("backend: temperature " + std::to_string(temperature) +
                      " requires allow_nonzero_temperature (evaluation runs use temperature 0)");
  }
  if (!std::isfinite(temperature) || temperature < 0.0) throw ConfigError("backend: temperature must be >= 0");
  if (max_retries < 0) throw ConfigError("backend: max_retries must be >= 0");
  if (requests_per_minute < 0) throw ConfigError("backend: requests_per_minute must be >= 0");
  if (!(timeout_s > 0.0)) throw ConfigError("backend: timeout_s must be positive");
  if (backoff_initial_s < 0.0 || backoff_max_s < backoff_initial_s) {
    throw ConfigError("backend: need 0 <= backoff_initial_s <= backoff_max_s");
  }
  if (max_in_flight == 0) throw ConfigError("backend: max_in_flight must be >= 1");
  if (model.empty()) throw ConfigError("backend: model name is empty");
  if (kind == BackendKind::RemoteChat) {
    if (endpoint.empty()) throw ConfigError("backend: remote-chat needs an endpoint URL");
    parse_url(endpoint);
    if (api_key_env.empty()) throw ConfigError("backend: api_key_env is empty");
  }
}

std::string BackendConfig::backend_id() const {
  if (kind == BackendKind::MockNearestSupport) return "mock-nearest-support";
  return "remote-chat:" + model + "@" + endpoint;
}

std::string BackendConfig::to_json() const {
  json j{{"kind", to_string(kind)},
         {"endpoint", endpoint},
         {"model", model},
         {"api_key_env", api_key_env},
         {"temperature", temperature},
         {"allow_nonzero_temperature", allow_nonzero_temperature},
         {"max_retries", max_retries},
         {"requests_per_minute", requests_per_minute},
         {"timeout_s", timeout_s},
         {"backoff_initial_s", backoff_initial_s},
         {"backoff_max_s", backoff_max_s},
         {"max_in_flight", max_in_flight},
         {"max_tokens", max_tokens}};
  return j.dump(2);
}

BackendConfig BackendConfig::from_json(const std::string& text) {
  BackendConfig c;
  try {
    const json j = json::parse(text);
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known{"kind", "endpoint", "model", "api_key_env", "temperature",
                                               "allow_nonzero_temperature", "max_retries", "requests_per_minute",
                                               "timeout_s", "backoff_initial_s", "backoff_max_s", "max_in_flight",
                                               "max_tokens"};
      if (!known.contains(key)) throw ConfigError("backend config: unknown key '" + key + "'");
    }
    if (j.contains("kind")) c.kind = parse_backend_kind(j["kind"].get<std::string>());
    if (c.kind == BackendKind::RemoteChat) c.model.clear();
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.allow_nonzero_temperature = j.value("allow_nonzero_temperature", c.allow_nonzero_temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.backoff_initial_s = j.value("backoff_initial_s", c.backoff_initial_s);
    c.backoff_max_s = j.value("backoff_max_s", c.backoff_max_s);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

BackendConfig BackendConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read backend config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// --- clocks and rate limiting --------------------------------------------------

double SystemClock::now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double SimulatedClock::now_s() {
  std::lock_guard lock(mutex_);
  return now_;
}

void SimulatedClock::sleep_for(double seconds) {
  if (seconds <= 0) return;
  std::lock_guard lock(mutex_);
  now_ += seconds;
  slept_ += seconds;
}

void SimulatedClock::advance(double seconds) {
  std::lock_guard lock(mutex_);
  now_ += seconds;
}

double SimulatedClock::total_slept() const {
  std::lock_guard lock(mutex_);
  return slept_;
}

RateLimiter::RateLimiter(int per_minute, std::shared_ptr<Clock> clock)
    : per_minute_(per_minute), clock_(std::move(clock)) {
  if (!clock_) throw ConfigError("rate limiter: no clock");
}

void RateLimiter::acquire() {
  if (per_minute_ <= 0) return;
  for (;;) {
    double wait = 0.0;
    {
      std::lock_guard lock(mutex_);
      const double now = clock_->now_s();
      while (!issued_.empty() && issued_.front() <= now - kWindowS) issued_.pop_front();
      if (issued_.size() < static_cast<std::size_t>(per_minute_)) {
        issued_.push_back(now);
        return;
      }
      wait = issued_.front() + kWindowS - now;
    }
    clock_->sleep_for(wait);
  }
}

std::deque<double> RateLimiter::window() const {
  std::lock_guard lock(mutex_);
  return issued_;
}

// --- response cache ---------------------------------------------------------------

ResponseCache::ResponseCache(fs::path directory) : directory_(std::move(directory)) {
  fs::create_directories(*directory_);
}

void ResponseCache::load_file_locked(const std::string& digest) const {
  loaded_[digest] = true;
  std::ifstream in(*directory_ / (digest + ".jsonl"));
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      CacheRecord r;
      r.request_digest = j.at("request_digest").get<std::string>();
      r.model = j.at("model").get<std::string>();
      r.timestamp = j.value("timestamp", "");
      r.raw_response = j.at("raw_response").get<std::string>();
      r.refreshed = j.value("refreshed", false);
      memory_[{r.request_digest, r.model}] = std::move(r);
    } catch (const json::exception& e) {
      spdlog::warn("response cache: skipping malformed record {}:{} ({})", digest, line_no, e.what());
    }
  }
}

std::optional<CacheRecord> ResponseCache::find(const std::string& digest, const std::string& model) const {
  {
    std::shared_lock lock(mutex_);
    if (!directory_ || loaded_.contains(digest)) {
      auto it = memory_.find({digest, model});
      if (it == memory_.end()) return std::nullopt;
      return it->second;
    }
  }
  std::unique_lock lock(mutex_);
  if (!loaded_.contains(digest)) load_file_locked(digest);
  auto it = memory_.find({digest, model});
  if (it == memory_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const CacheRecord& record) {
  std::unique_lock lock(mutex_);
  if (directory_) {
    if (!loaded_.contains(record.request_digest)) load_file_locked(record.request_digest);
    const json j{{"request_digest", record.request_digest},
                 {"model", record.model},
                 {"timestamp", record.timestamp},
                 {"raw_response", record.raw_response},
                 {"refreshed", record.refreshed}};
    const fs::path file = *directory_ / (record.request_digest + ".jsonl");
    std::ofstream os(file, std::ios::app);
    os << j.dump() << '\n';
    if (!os) throw GatewayError("cannot append to response cache " + file.string());
  }
  memory_[{record.request_digest, record.model}] = record;
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return memory_.size();
}

// --- mock backend ----------------------------------------------------------------

VlmResponse mock_classify(const PromptBundle& bundle, EmbeddingProvider& provider, EmbeddingCache& cache) {
  const auto embed_part = [&](const PromptPart& part) {
    WaveformImage image;
    image.png_bytes = part.png;
    if (part.source) image.source = *part.source;
    return embed(image, provider, cache);
  };
  const Embedding query = embed_part(bundle.parts.at(bundle.query_part()));

  std::optional<std::string> best_class;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& part : bundle.parts) {
    if (part.kind != PromptPart::Kind::Image || part.role.rfind("example:", 0) != 0) continue;
    const double d = cosine_distance(embed_part(part).view(), query.view());
    if (d < best) {
      best = d;
      best_class = part.role.substr(8);
    }
  }
  if (!best_class) throw PromptError("mock backend: bundle has no example images");

  VlmResponse r;
  r.raw_text = std::string(kDecisionToken) + ": " + *best_class;
  r.decision = parse_decision(r.raw_text, bundle.class_names);
  r.backend_id = "mock-nearest-support";
  r.prompt_digest = bundle.digest;
  r.attempts = 1;
  return r;
}

// --- gateway -----------------------------------------------------------------------

VlmGateway::VlmGateway(BackendConfig config, Options options) : config_(std::move(config)), options_(std::move(options)) {
  config_.validate();
  if (!options_.cache) options_.cache = std::make_shared<ResponseCache>();
  if (!options_.clock) options_.clock = std::make_shared<SystemClock>();
  if (config_.kind == BackendKind::RemoteChat) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw AuthenticationError("environment variable " + config_.api_key_env +
                                " is not set; export the API key for " + config_.endpoint +
                                " under that name (or set api_key_env in the backend config)");
    }
    api_key_ = key;
    if (!options_.transport) options_.transport = make_http_transport();
    cache_model_ = config_.model;
  } else {
    if (!options_.mock_provider) throw ConfigError("mock backend needs an embedding provider");
    if (!options_.mock_cache) options_.mock_cache = std::make_shared<EmbeddingCache>();
    cache_model_ = "mock-nearest-support/" + options_.mock_provider->provider_id() + "/" +
                   options_.mock_provider->model_id();
  }
  limiter_ = std::make_unique<RateLimiter>(
      config_.kind == BackendKind::RemoteChat ? config_.requests_per_minute : 0, options_.clock);
}

GatewayStats VlmGateway::stats() const {
  return {requests_.load(), cache_hits_.load(), backend_calls_.load(), retries_.load()};
}

std::string VlmGateway::chat_request_body(const PromptBundle& bundle, const BackendConfig& config) {
  json content = json::array();
  for (const auto& p : bundle.parts) {
    if (p.kind == PromptPart::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", p.text}});
    } else {
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(p.png)}}}});
    }
  }
  json body{{"model", config.model},
            {"temperature", config.temperature},
            {"max_tokens", config.max_tokens},
            {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
  return body.dump();
}

std::string VlmGateway::chat_reply_text(const std::string& body) {
  try {
    const json j = json::parse(body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string text;
      for (const auto& part : content) {
        if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
      }
      return text;
    }
    throw MalformedReply("chat reply: message content is neither a string nor a part list");
  } catch (const json::exception& e) {
    throw MalformedReply(std::string("chat reply: ") + e.what());
  }
}

std::string VlmGateway::call_remote(const PromptBundle& bundle, int& attempts) {
  HttpRequest req;
  req.method = "POST";
  req.url = config_.endpoint;
  req.body = chat_request_body(bundle, config_);
  req.content_type = "application/json";
  req.timeout_s = config_.timeout_s;
  req.headers.emplace_back("Authorization", "Bearer " + api_key_);

  for (int attempt = 0;; ++attempt) {
    limiter_->acquire();
    ++backend_calls_;
    attempts = attempt + 1;
    std::string failure;
    try {
      const HttpResponse resp = options_.transport->send(req);
      if (resp.status == 200) return chat_reply_text(resp.body);
      if (resp.status == 401 || resp.status == 403) {
        throw AuthenticationError("backend rejected the API key from " + config_.api_key_env + " (HTTP " +
                                  std::to_string(resp.status) + ")");
      }
      if (!is_transient(resp.status)) {
        throw GatewayError("backend returned HTTP " + std::to_string(resp.status) + ": " + resp.body.substr(0, 300));
      }
      failure = "HTTP " + std::to_string(resp.status);
    } catch (const TransportError& e) {
      failure = e.what();
    }
    if (attempt >= config_.max_retries) {
      throw RetriesExhausted("backend failed after " + std::to_string(attempt + 1) + " attempts; last: " + failure);
    }
    const double delay = std::min(config_.backoff_max_s, config_.backoff_initial_s * std::ldexp(1.0, attempt));
    ++retries_;
    spdlog::warn("retry {}/{} for prompt {} after {} (backoff {:.2f} s)", attempt + 1, config_.max_retries,
                 bundle.digest.substr(0, 12), failure, delay);
    options_.clock->sleep_for(delay);
  }
}

std::string VlmGateway::call_backend(const PromptBundle& bundle, int& attempts) {
  if (config_.kind == BackendKind::RemoteChat) return call_remote(bundle, attempts);
  ++backend_calls_;
  attempts = 1;
  return mock_classify(bundle, *options_.mock_provider, *options_.mock_cache).raw_text;
}

VlmResponse VlmGateway::classify(const PromptBundle& bundle) {
  ++requests_;
  if (bundle.digest.empty() || bundle.digest != bundle.compute_digest()) {
    throw PromptError("prompt bundle digest does not match its parts");
  }
  VlmResponse r;
  r.backend_id = config_.backend_id();
  r.prompt_digest = bundle.digest;

  if (!options_.refresh) {
    if (auto hit = options_.cache->find(bundle.digest, cache_model_)) {
      ++cache_hits_;
      r.raw_text = std::move(hit->raw_response);
      r.decision = parse_decision(r.raw_text, bundle.class_names);
      r.from_cache = true;
      return r;
    }
  }

  {
    std::unique_lock lock(slots_mutex_);
    slots_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct SlotRelease {
    VlmGateway* g;
    ~SlotRelease() {
      {
        std::lock_guard lock(g->slots_mutex_);
        --g->in_flight_;
      }
      g->slots_cv_.notify_one();
    }
  } release{this};

  const double start = options_.clock->now_s();
  r.raw_text = call_backend(bundle, r.attempts);
  r.latency_ms = (options_.clock->now_s() - start) * 1000.0;
  r.decision = parse_decision(r.raw_text, bundle.class_names);

  if (options_.refresh) spdlog::info("refreshing cached response for prompt {} (--no-cache)", bundle.digest);
  options_.cache->store({bundle.digest, cache_model_, utc_timestamp(), r.raw_text, options_.refresh});
  return r;
}

}  // namespace waveprompt
