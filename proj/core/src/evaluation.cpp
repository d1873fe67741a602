// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "waveprompt/evaluation.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "waveprompt/digest.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/http_provider.hpp"

namespace waveprompt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ParseFailurePolicy policy) {
  return policy == ParseFailurePolicy::CountAsWrong ? "count-as-wrong" : "exclude";
}

ParseFailurePolicy parse_parse_failure_policy(std::string_view text) {
  if (text == "count-as-wrong") return ParseFailurePolicy::CountAsWrong;
  if (text == "exclude") return ParseFailurePolicy::Exclude;
  throw ConfigError("unknown parse-failure policy '" + std::string(text) + "' (expected count-as-wrong or exclude)");
}

// --- EvalConfig ---------------------------------------------------------------------

void EvalConfig::validate() const {
  render.validate();
  selection.validate();
  backend.validate();
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
  if (embedding.provider != "file" && embedding.provider != "http") {
    throw ConfigError("embedding provider must be 'file' or 'http', got '" + embedding.provider + "'");
  }
  if (embedding.provider == "http" && embedding.url.empty()) throw ConfigError("http embedding provider needs a url");
  std::set<std::string> seen;
  for (const auto& s : subjects) {
    if (!seen.insert(s).second) throw ConfigError("subject '" + s + "' listed twice");
  }
}

std::string EvalConfig::to_json() const {
  json j;
  j["manifest"] = manifest.string();
  j["render"] = json::parse(render.to_json());
  j["selection"] = {{"shots", selection.shots},
                    {"strategy", to_string(selection.strategy)},
                    {"seed", selection.rng_seed}};
  j["prompt"] = {{"tier", to_string(tier)}, {"class_names", class_names}, {"template_dir", template_dir.string()}};
  j["backend"] = json::parse(backend.to_json());
  j["embedding"] = {{"provider", embedding.provider},
                    {"store", embedding.store.string()},
                    {"url", embedding.url},
                    {"timeout_s", embedding.timeout_s}};
  j["downsample"] = downsample.to_string();
  j["parse_failure"] = to_string(parse_failure);
  j["subjects"] = subjects;
  j["fallback_random"] = fallback_random;
  j["jobs"] = jobs;
  j["cache_dir"] = cache_dir.string();
  j["refresh_cache"] = refresh_cache;
  return j.dump(2);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

EvalConfig EvalConfig::from_json(const std::string& text) {
  EvalConfig c;
  try {
    const json j = json::parse(text);
    reject_unknown(j,
                   {"manifest", "render", "selection", "prompt", "backend", "embedding", "downsample", "parse_failure",
                    "subjects", "fallback_random", "jobs", "cache_dir", "refresh_cache"},
                   "config");
    c.manifest = j.value("manifest", std::string());
    if (j.contains("render")) c.render = RenderConfig::from_json(j["render"].dump());
    if (j.contains("selection")) {
      const json& s = j["selection"];
      reject_unknown(s, {"shots", "strategy", "seed"}, "selection");
      c.selection.shots = s.value("shots", c.selection.shots);
      if (s.contains("strategy")) c.selection.strategy = parse_strategy(s["strategy"].get<std::string>());
      c.selection.rng_seed = s.value("seed", c.selection.rng_seed);
    }
    if (j.contains("prompt")) {
      const json& p = j["prompt"];
      reject_unknown(p, {"tier", "class_names", "template_dir"}, "prompt");
      if (p.contains("tier")) c.tier = parse_prompt_tier(p["tier"].get<std::string>());
      c.class_names = p.value("class_names", c.class_names);
      c.template_dir = p.value("template_dir", std::string());
    }
    if (j.contains("backend")) c.backend = BackendConfig::from_json(j["backend"].dump());
    if (j.contains("embedding")) {
      const json& e = j["embedding"];
      reject_unknown(e, {"provider", "store", "url", "timeout_s"}, "embedding");
      c.embedding.provider = e.value("provider", c.embedding.provider);
      c.embedding.store = e.value("store", std::string());
      c.embedding.url = e.value("url", c.embedding.url);
      c.embedding.timeout_s = e.value("timeout_s", c.embedding.timeout_s);
    }
    if (j.contains("downsample")) c.downsample = DownsamplePolicy::parse(j["downsample"].get<std::string>());
    if (j.contains("parse_failure")) {
      c.parse_failure = parse_parse_failure_policy(j["parse_failure"].get<std::string>());
    }
    c.subjects = j.value("subjects", c.subjects);
    c.fallback_random = j.value("fallback_random", c.fallback_random);
    c.jobs = j.value("jobs", c.jobs);
    c.cache_dir = j.value("cache_dir", std::string());
    c.refresh_cache = j.value("refresh_cache", c.refresh_cache);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string EvalConfig::digest() const { return sha256_hex(to_json()); }

// --- helpers -------------------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

WaveformImage RenderCache::get(const EegTrial& trial, const RenderConfig& config) {
  auto key = std::make_pair(trial.ref(), config.digest());
  {
    std::lock_guard lock(mutex_);
    if (auto it = images_.find(key); it != images_.end()) return it->second;
  }
  WaveformImage image = rasterize(trial, config);
  std::lock_guard lock(mutex_);
  if (images_.size() < capacity_) images_.emplace(std::move(key), image);
  return image;
}

void audit_bundle(const PromptBundle& bundle, const DatasetManifest& dataset, AuditResult& audit) {
  ++audit.bundles;
  if (!bundle.query) {
    audit.violations.push_back("bundle " + bundle.digest.substr(0, 12) + " has no query reference");
    return;
  }
  const TrialRef& query = *bundle.query;
  const std::string where = " (query " + query.subject_id + "/" + std::to_string(query.trial_index) + ")";
  for (std::size_t i = 0; i < bundle.parts.size(); ++i) {
    const PromptPart& part = bundle.parts[i];
    if (part.kind != PromptPart::Kind::Image || part.role.rfind("example:", 0) != 0) continue;
    ++audit.example_images;
    if (!part.source) {
      audit.violations.push_back("example image without source" + where);
      continue;
    }
    const TrialRef& src = *part.source;
    const std::string name = src.subject_id + "/" + std::to_string(src.trial_index);
    const std::string role_class = part.role.substr(8);
    if (i == 0 || bundle.parts[i - 1].kind != PromptPart::Kind::Text ||
        bundle.parts[i - 1].text != std::string(kExampleLabelPrefix) + role_class) {
      audit.violations.push_back("example " + name + " is not preceded by its class label" + where);
    }
    int label = -1;
    try {
      label = dataset.trial(src).label().value;
    } catch (const Error&) {
      audit.violations.push_back("example " + name + " is not in the dataset" + where);
      continue;
    }
    if (label < 0 || static_cast<std::size_t>(label) >= bundle.class_names.size() ||
        bundle.class_names[static_cast<std::size_t>(label)] != role_class) {
      audit.violations.push_back("example " + name + " is labelled " + role_class + " but has label " +
                                 std::to_string(label) + where);
    }
    if (src.subject_id != query.subject_id) continue;
    if (label != 0) {
      audit.violations.push_back("task-class example " + name + " comes from the held-out subject" + where);
    } else if (src.trial_index >= query.trial_index) {
      audit.violations.push_back("anchor " + name + " is not before the query" + where);
    }
  }
}

// --- resources -------------------------------------------------------------------

EvalResources make_resources(const EvalConfig& config) {
  config.validate();
  EvalResources r;
  r.embedding_cache = std::make_shared<EmbeddingCache>();
  r.renders = std::make_shared<RenderCache>();
  if (config.embedding.provider == "http") {
    r.provider = std::make_shared<HttpProvider>(config.embedding.url, make_http_transport(), config.embedding.timeout_s);
  } else if (!config.embedding.store.empty()) {
    auto store = std::make_shared<EmbeddingStore>(EmbeddingStore::load(config.embedding.store));
    r.provider = std::make_shared<FileProvider>(std::move(store));
  }
  const bool mock = config.backend.kind == BackendKind::MockNearestSupport;
  if (mock && !r.provider) {
    throw ConfigError("the mock backend compares image embeddings: set an embedding store or an http provider");
  }
  VlmGateway::Options options;
  options.cache = config.cache_dir.empty() ? std::make_shared<ResponseCache>()
                                           : std::make_shared<ResponseCache>(config.cache_dir);
  options.refresh = config.refresh_cache;
  options.mock_provider = r.provider;
  options.mock_cache = r.embedding_cache;
  r.gateway = std::make_shared<VlmGateway>(config.backend, std::move(options));
  return r;
}

DatasetManifest prepare_dataset(const DatasetManifest& dataset, const EvalConfig& config) {
  DatasetManifest out = dataset;
  if (!config.subjects.empty()) {
    out.subjects.clear();
    for (const auto& id : config.subjects) {
      bool found = false;
      for (const auto& pool : dataset.subjects) {
        if (pool.subject_id == id) {
          out.subjects.push_back(pool);
          found = true;
        }
      }
      if (!found) throw ConfigError("subject '" + id + "' is not in dataset " + dataset.dataset_name);
    }
    // Restore manifest order.
    std::vector<SubjectPool> ordered;
    for (const auto& pool : dataset.subjects) {
      for (auto& kept : out.subjects) {
        if (kept.subject_id == pool.subject_id) ordered.push_back(std::move(kept));
      }
    }
    out.subjects = std::move(ordered);
  }
  if (out.subjects.size() < 2) {
    throw ConfigError("leave-one-subject-out needs at least 2 subjects, have " + std::to_string(out.subjects.size()));
  }
  out = downsample_dataset(out, config.downsample);
  out.validate();
  return out;
}

EmbeddingTable embed_dataset(const DatasetManifest& dataset, const RenderConfig& render, EvalResources& resources,
                             std::size_t jobs) {
  if (!resources.provider) throw ConfigError("this strategy needs trial embeddings: configure an embedding provider");
  std::vector<const EegTrial*> trials;
  for (const auto& pool : dataset.subjects) {
    for (const auto& t : pool.trials) trials.push_back(&t);
  }
  std::vector<std::optional<std::vector<float>>> vectors(trials.size());
  std::vector<std::vector<std::string>> missing(trials.size());
  parallel_for(trials.size(), jobs, [&](std::size_t i) {
    const WaveformImage image = resources.renders->get(*trials[i], render);
    try {
      vectors[i] = embed(image, *resources.provider, *resources.embedding_cache).vector;
    } catch (const LookupMiss& miss) {
      missing[i] = miss.missing();
    }
  });
  std::vector<std::string> all_missing;
  EmbeddingTable table;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (vectors[i]) {
      table.insert(trials[i]->ref(), std::move(*vectors[i]));
    } else {
      all_missing.insert(all_missing.end(), missing[i].begin(), missing[i].end());
    }
  }
  if (!all_missing.empty()) throw LookupMiss(std::move(all_missing));
  return table;
}

// --- LOSO -------------------------------------------------------------------------

namespace {

bool needs_embeddings(const EvalConfig& config) {
  return config.tier == PromptTier::ReasoningExamples &&
         (config.selection.strategy == Strategy::Representativeness ||
          config.selection.strategy == Strategy::RepresentativenessSimilarity);
}

bool historical_shortfall(const SelectionError& e) {
  if (dynamic_cast<const EmptyHistoricalPool*>(&e) != nullptr) return true;
  const auto* ip = dynamic_cast<const InsufficientPool*>(&e);
  return ip != nullptr && ip->pool() == "historical pool";
}

struct TrialJob {
  Prediction prediction;
  AuditResult audit;
};

}  // namespace

EvalReport run_loso(const EvalConfig& config, const DatasetManifest& dataset, EvalResources& resources,
                    const EmbeddingTable* embeddings) {
  config.validate();
  if (!resources.gateway) throw ConfigError("evaluation resources have no gateway");
  if (!resources.renders) resources.renders = std::make_shared<RenderCache>();
  const int num_classes = dataset.num_classes;

  PromptConfig prompt;
  prompt.tier = config.tier;
  prompt.templates = PromptTemplates::load(config.template_dir.empty() ? default_template_dir() : config.template_dir);
  prompt.class_names = config.class_names.empty() ? default_class_names(num_classes) : config.class_names;
  prompt.normalize();
  prompt.validate();
  if (prompt.class_names.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("dataset has " + std::to_string(num_classes) + " classes but " +
                      std::to_string(prompt.class_names.size()) + " class names were given");
  }

  EmbeddingTable own_table;
  static const EmbeddingTable kEmpty;
  const EmbeddingTable* table = embeddings;
  if (needs_embeddings(config) && table == nullptr) {
    own_table = embed_dataset(dataset, config.render, resources, config.jobs);
    table = &own_table;
  }
  if (table == nullptr) table = &kEmpty;

  EvalReport report;
  report.config_json = config.to_json();
  report.config_digest = config.digest();
  report.template_version = prompt.templates.version();
  report.render_digest = config.render.digest();
  report.embedding_model =
      resources.provider ? resources.provider->provider_id() + "/" + resources.provider->model_id() : "";
  report.backend_id = resources.gateway->config().backend_id();
  report.strategy = to_string(config.selection.strategy);
  report.tier = to_string(config.tier);
  report.class_names = prompt.class_names;

  const GatewayStats before = resources.gateway->stats();
  VlmGateway& gateway = *resources.gateway;

  for (const auto& pool : dataset.subjects) {
    spdlog::info("held-out subject {} ({} trials)", pool.subject_id, pool.trials.size());
    std::vector<TrialJob> jobs(pool.trials.size());
    parallel_for(pool.trials.size(), config.jobs, [&](std::size_t i) {
      const EegTrial& trial = pool.trials[i];
      Prediction& p = jobs[i].prediction;
      p.trial_index = trial.trial_index();
      p.true_label = trial.label().value;
      try {
        std::optional<SupportSet> support;
        if (config.tier == PromptTier::ReasoningExamples) {
          try {
            support = build_support_set(trial, dataset, *table, config.selection);
          } catch (const LeakageViolation& e) {
            jobs[i].audit.violations.push_back(e.what());
            throw;
          } catch (const SelectionError& e) {
            if (!historical_shortfall(e)) throw;
            if (!config.fallback_random) {
              p.status = TrialStatus::Skipped;
              p.note = std::string("skipped: ") + e.what();
              return;
            }
            SelectionConfig fallback = config.selection;
            fallback.strategy = Strategy::Random;
            support = build_support_set(trial, dataset, *table, fallback);
            p.fallback = true;
            p.note = std::string("fallback to random: ") + e.what();
          }
          for (auto& e : support->entries) {
            e.image = resources.renders->get(dataset.trial(e.source), config.render);
            p.support.push_back({e.source, e.label.value, e.selection_score});
          }
        }
        const WaveformImage query = resources.renders->get(trial, config.render);
        const PromptBundle bundle = build_prompt(prompt, support ? &*support : nullptr, query);
        audit_bundle(bundle, dataset, jobs[i].audit);
        p.prompt_digest = bundle.digest;

        const VlmResponse response = gateway.classify(bundle);
        p.from_cache = response.from_cache;
        p.raw_response = response.raw_text;
        if (const auto* label = std::get_if<ClassLabel>(&response.decision)) {
          p.predicted = label->value;
          p.scored_label = label->value;
        } else {
          p.parse_failure = true;
          if (config.parse_failure == ParseFailurePolicy::Exclude) {
            p.status = TrialStatus::Excluded;
          } else {
            p.scored_label = (p.true_label + 1) % num_classes;
          }
        }
      } catch (const AuthenticationError&) {
        throw;
      } catch (const Error& e) {
        p.status = TrialStatus::Failed;
        p.note = e.what();
        spdlog::warn("trial {}/{} failed: {}", trial.subject_id(), trial.trial_index(), e.what());
      }
    });

    SubjectResult result;
    result.subject_id = pool.subject_id;
    for (auto& job : jobs) {
      result.predictions.push_back(std::move(job.prediction));
      report.audit.bundles += job.audit.bundles;
      report.audit.example_images += job.audit.example_images;
      report.audit.violations.insert(report.audit.violations.end(), job.audit.violations.begin(),
                                     job.audit.violations.end());
    }
    report.subjects.push_back(std::move(result));
  }

  const GatewayStats after = resources.gateway->stats();
  report.cache = {after.requests - before.requests, after.cache_hits - before.cache_hits,
                  after.backend_calls - before.backend_calls, after.retries - before.retries};
  finalize_report(report, num_classes);
  return report;
}

EvalReport run_loso(const EvalConfig& config) {
  config.validate();
  if (config.manifest.empty()) throw ConfigError("no manifest given");
  EvalResources resources = make_resources(config);
  const DatasetManifest dataset = prepare_dataset(load_manifest(config.manifest), config);
  return run_loso(config, dataset, resources);
}

std::vector<EvalReport> run_ablation(const EvalConfig& base, const std::vector<Strategy>& strategies,
                                     const std::vector<PromptTier>& tiers, const DatasetManifest& dataset,
                                     EvalResources& resources) {
  if (strategies.empty() || tiers.empty()) throw ConfigError("ablation axes must be non-empty");
  std::optional<EmbeddingTable> table;
  std::vector<EvalReport> reports;
  for (Strategy s : strategies) {
    for (PromptTier t : tiers) {
      EvalConfig cfg = base;
      cfg.selection.strategy = s;
      cfg.tier = t;
      if (needs_embeddings(cfg) && !table) table = embed_dataset(dataset, cfg.render, resources, cfg.jobs);
      spdlog::info("ablation: strategy={} tier={}", to_string(s), to_string(t));
      reports.push_back(run_loso(cfg, dataset, resources, table ? &*table : nullptr));
    }
  }
  return reports;
}

}  // namespace waveprompt
