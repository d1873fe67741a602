// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli_config.hpp"
#include "waveprompt/dataset.hpp"
#include "waveprompt/embedding.hpp"
#include "waveprompt/error.hpp"
#include "waveprompt/evaluation.hpp"
#include "waveprompt/gateway.hpp"
#include "waveprompt/http.hpp"
#include "waveprompt/http_provider.hpp"
#include "waveprompt/prompting.hpp"
#include "waveprompt/render.hpp"
#include "waveprompt/retrieval.hpp"
#include "waveprompt/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace waveprompt;
using cli::LayeredConfig;
using cli::Setting;
using cli::UsageError;
using K = cli::ValueKind;

struct Globals {
  std::string config_file;
  std::string jobs;
  std::string log_level = "info";
  bool no_cache = false;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* no_cache_opt = nullptr;
};

const Setting kJobs{"--jobs", "/jobs", K::UInt, "worker threads"};
const Setting kNoCache{"--no-cache", "/refresh_cache", K::Bool, "ignore and overwrite cached responses"};

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& file, const std::string& bytes) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + file.string());
}

// "-" or empty: stdout.
void emit(const std::string& target, const std::string& text) {
  if (target.empty() || target == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_bytes(target, text);
  }
}

json render_defaults() { return json::parse(RenderConfig{}.to_json()); }

std::vector<Setting> pick(const std::vector<Setting>& pool, const json& doc) {
  std::vector<Setting> out;
  for (const auto& s : pool) {
    if (doc.contains(json::json_pointer(s.path))) out.push_back(s);
  }
  return out;
}

/// One subcommand: its option document, settings and handler.
struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<LayeredConfig> config;
  bool strict_file = false;
  std::function<int(const LayeredConfig&)> run;
};

Command& add_command(std::vector<std::unique_ptr<Command>>& commands, CLI::App& root, const std::string& name,
                     const std::string& help, json defaults, std::vector<Setting> settings,
                     const std::map<std::string, std::string>& aliases = {}) {
  auto cmd = std::make_unique<Command>();
  cmd->app = root.add_subcommand(name, help);
  cmd->config = std::make_unique<LayeredConfig>(std::move(defaults), std::move(settings));
  for (const auto& [flag, names] : aliases) cmd->config->alias(flag, names);
  cmd->config->bind(*cmd->app);
  commands.push_back(std::move(cmd));
  return *commands.back();
}

void resolve(Command& cmd, const Globals& globals) {
  LayeredConfig& cfg = *cmd.config;
  if (!globals.config_file.empty()) {
    json file;
    try {
      file = json::parse(read_text(globals.config_file));
    } catch (const json::exception& e) {
      throw UsageError("--config: " + globals.config_file + " is not valid JSON (" + e.what() + ")");
    } catch (const Error& e) {
      throw UsageError(std::string("--config: ") + e.what());
    }
    cfg.apply_file(file, cmd.strict_file);
  }
  cfg.apply_environment();
  for (const Setting* s : {&kJobs, &kNoCache}) {
    const char* v = std::getenv(cli::env_name(s->flag).c_str());
    if (v != nullptr && *v != '\0' && cfg.document().contains(json::json_pointer(s->path))) {
      cfg.assign(s->path, cli::convert(*s, v), "env:" + cli::env_name(s->flag));
    }
  }
  cfg.apply_flags();
  if (globals.jobs_opt->count() > 0 && cfg.document().contains(json::json_pointer(kJobs.path))) {
    cfg.assign(kJobs.path, cli::convert(kJobs, globals.jobs), "flag --jobs");
  }
  if (globals.no_cache && cfg.document().contains(json::json_pointer(kNoCache.path))) {
    cfg.assign(kNoCache.path, true, "flag --no-cache");
  }
  cfg.log_sources();
}

void print_digest(const std::string& digest) { std::cerr << "config digest: " << digest << "\n"; }

template <typename T>
T get(const LayeredConfig& cfg, const std::string& path) {
  return cfg.document().at(json::json_pointer(path)).get<T>();
}

std::string require(const LayeredConfig& cfg, const std::string& path, const std::string& flag) {
  auto v = get<std::string>(cfg, path);
  if (v.empty()) throw UsageError(flag + " is required");
  return v;
}

RenderConfig render_of(const LayeredConfig& cfg) { return RenderConfig::from_json(cfg.document()["render"].dump()); }

std::shared_ptr<EmbeddingProvider> make_provider(const json& embedding, bool required) {
  const std::string provider = embedding.value("provider", "file");
  if (provider == "http") {
    const std::string url = embedding.value("url", "");
    if (url.empty()) throw UsageError("--embed-url is required with --provider http");
    return std::make_shared<HttpProvider>(url, make_http_transport(), embedding.value("timeout_s", 30.0));
  }
  if (provider != "file") throw UsageError("--provider must be 'file' or 'http', got '" + provider + "'");
  const std::string store = embedding.value("store", "");
  if (store.empty()) {
    if (required) throw UsageError("--store is required with --provider file");
    return nullptr;
  }
  return std::make_shared<FileProvider>(std::make_shared<EmbeddingStore>(EmbeddingStore::load(store)));
}

std::string trial_file_name(const TrialRef& ref) {
  char index[16];
  std::snprintf(index, sizeof index, "%06u", ref.trial_index);
  return ref.subject_id + "_" + index + ".png";
}

// --- synth ---------------------------------------------------------------------------

int run_synth(const LayeredConfig& cfg) {
  print_digest(cfg.digest());
  const json& d = cfg.document();
  SynthSpec spec;
  spec.dataset_name = d["synth"]["name"];
  spec.num_subjects = d["synth"]["subjects"];
  spec.trials_per_class = d["synth"]["trials_per_class"].get<std::vector<std::size_t>>();
  spec.channels = d["synth"]["channels"];
  spec.sampling_rate = d["synth"]["rate"];
  spec.trial_duration_s = d["synth"]["duration"];
  spec.noise_uv = d["synth"]["noise_uv"];
  spec.rhythm_uv = d["synth"]["rhythm_uv"];
  spec.rhythm_hz = d["synth"]["rhythm_hz"];
  const auto seed = d["seed"].get<std::uint64_t>();
  const std::string out = require(cfg, "/out", "--out");

  const DatasetManifest dataset = synthesize_dataset(spec, seed);
  const fs::path manifest = save_manifest(dataset, out);
  std::cout << "manifest: " << manifest.string() << "\n";

  const std::string emb_out = d["embeddings"]["out"];
  if (!emb_out.empty()) {
    EmbeddingSynthSpec es;
    es.dimension = d["embeddings"]["dim"];
    es.class_scale = d["embeddings"]["class_scale"];
    es.subject_scale = d["embeddings"]["subject_scale"];
    es.noise_scale = d["embeddings"]["noise_scale"];
    es.label_noise = d["embeddings"]["label_noise"];
    const RenderConfig render = render_of(cfg);
    const EmbeddingStore store = synthesize_embeddings(dataset, render, es, seed);
    store.save(emb_out);
    std::cout << "embeddings: " << emb_out << " (" << store.size() << " vectors, render " << render.digest()
              << ")\n";
  }
  return 0;
}

// --- render --------------------------------------------------------------------------

int run_render(const LayeredConfig& cfg) {
  print_digest(cfg.digest());
  const DatasetManifest dataset = load_manifest(require(cfg, "/manifest", "--manifest"));
  const RenderConfig render = render_of(cfg);
  const fs::path out = require(cfg, "/out", "--out");
  const auto subject = get<std::string>(cfg, "/subject");
  const auto trial = get<long long>(cfg, "/trial");

  std::vector<const EegTrial*> trials;
  if (trial >= 0) {
    if (subject.empty()) throw UsageError("--trial needs --subject");
    trials.push_back(&dataset.trial({subject, static_cast<std::uint32_t>(trial)}));
  } else {
    for (const auto& pool : dataset.subjects) {
      if (!subject.empty() && pool.subject_id != subject) continue;
      for (const auto& t : pool.trials) trials.push_back(&t);
    }
    if (!subject.empty() && trials.empty()) dataset.subject(subject);  // throws for an unknown subject
  }

  std::vector<std::string> digests(trials.size());
  fs::create_directories(out);
  parallel_for(trials.size(), get<std::size_t>(cfg, "/jobs"), [&](std::size_t i) {
    const WaveformImage image = rasterize(*trials[i], render);
    write_bytes(out / trial_file_name(image.source),
                std::string(image.png_bytes.begin(), image.png_bytes.end()));
    digests[i] = image.digest();
  });
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialRef ref = trials[i]->ref();
    std::cout << ref.subject_id << '\t' << ref.trial_index << '\t' << digests[i] << '\t'
              << (out / trial_file_name(ref)).string() << '\n';
  }
  return 0;
}

// --- embed ---------------------------------------------------------------------------

int run_embed(const LayeredConfig& cfg) {
  print_digest(cfg.digest());
  const DatasetManifest dataset = load_manifest(require(cfg, "/manifest", "--manifest"));
  const RenderConfig render = render_of(cfg);
  const std::string render_digest = render.digest();
  const json& e = cfg.document()["embedding"];
  const std::string store_dir = e.value("store", "");
  if (store_dir.empty()) throw UsageError("--store is required");
  const std::string provider_name = e.value("provider", "file");

  std::shared_ptr<EmbeddingStore> store;
  std::shared_ptr<EmbeddingProvider> provider;
  if (provider_name == "file") {
    store = std::make_shared<EmbeddingStore>(EmbeddingStore::open_or_create(store_dir, "file", "unknown", 1));
    provider = std::make_shared<FileProvider>(store);
  } else {
    provider = make_provider(e, true);
    store = std::make_shared<EmbeddingStore>(
        EmbeddingStore::open_or_create(store_dir, provider->provider_id(), provider->model_id(), provider->dimension()));
    if (store->model_id() != provider->model_id() || store->dimension() != provider->dimension()) {
      throw EmbeddingError("store " + store_dir + " holds " + store->model_id() + " (D=" +
                           std::to_string(store->dimension()) + ") but the service serves " + provider->model_id() +
                           " (D=" + std::to_string(provider->dimension()) + ")");
    }
  }

  std::vector<const EegTrial*> trials;
  for (const auto& pool : dataset.subjects) {
    for (const auto& t : pool.trials) trials.push_back(&t);
  }
  std::vector<std::string> digests(trials.size());
  std::vector<std::vector<std::string>> missing(trials.size());
  std::atomic<std::size_t> computed{0};
  parallel_for(trials.size(), get<std::size_t>(cfg, "/jobs"), [&](std::size_t i) {
    const WaveformImage image = rasterize(*trials[i], render);
    digests[i] = image.digest();
    if (provider_name == "file") {
      try {
        provider->compute(image);
      } catch (const LookupMiss& miss) {
        missing[i] = miss.missing();
      }
      return;
    }
    if (store->find(digests[i])) return;
    std::vector<float> v = provider->compute(image);
    store->put(digests[i], std::move(v));
    ++computed;
  });
  std::vector<std::string> all_missing;
  for (auto& m : missing) all_missing.insert(all_missing.end(), m.begin(), m.end());
  if (!all_missing.empty()) throw LookupMiss(std::move(all_missing));

  for (std::size_t i = 0; i < trials.size(); ++i) store->index(trials[i]->ref(), render_digest, digests[i]);
  store->save(store_dir);
  std::cout << "embedded " << trials.size() << " trials (" << computed.load() << " computed) with "
            << provider->provider_id() << "/" << provider->model_id() << ", render " << render_digest << "\n";
  return 0;
}

// --- select --------------------------------------------------------------------------

PromptConfig prompt_of(const json& p, int num_classes) {
  PromptConfig prompt;
  prompt.tier = parse_prompt_tier(p["tier"].get<std::string>());
  const std::string dir = p["template_dir"];
  prompt.templates = PromptTemplates::load(dir.empty() ? default_template_dir() : fs::path(dir));
  const auto names = p["class_names"].get<std::vector<std::string>>();
  prompt.class_names = names.empty() ? default_class_names(num_classes) : names;
  prompt.normalize();
  prompt.validate();
  if (prompt.class_names.size() != static_cast<std::size_t>(num_classes)) {
    throw ConfigError("dataset has " + std::to_string(num_classes) + " classes but " +
                      std::to_string(prompt.class_names.size()) + " class names were given");
  }
  return prompt;
}

int run_select(const LayeredConfig& cfg) {
  print_digest(cfg.digest());
  const json& d = cfg.document();
  const DatasetManifest dataset = load_manifest(require(cfg, "/manifest", "--manifest"));
  const RenderConfig render = render_of(cfg);
  const std::string subject = require(cfg, "/test_subject", "--test-subject");
  const EegTrial& test = dataset.trial({subject, d["test_trial"].get<std::uint32_t>()});

  SelectionConfig selection;
  selection.shots = d["selection"]["shots"];
  selection.strategy = parse_strategy(d["selection"]["strategy"].get<std::string>());
  selection.rng_seed = d["selection"]["seed"];
  selection.validate();

  EmbeddingTable table;
  if (selection.strategy == Strategy::Representativeness ||
      selection.strategy == Strategy::RepresentativenessSimilarity) {
    EvalResources resources;
    resources.provider = make_provider(d["embedding"], true);
    resources.embedding_cache = std::make_shared<EmbeddingCache>();
    resources.renders = std::make_shared<RenderCache>();
    table = embed_dataset(dataset, render, resources, d["jobs"]);
  }
  SupportSet support = build_support_set(test, dataset, table, selection);
  emit(d["out"], support_set_to_json(support) + "\n");

  const std::string bundle_path = d["bundle"];
  if (!bundle_path.empty()) {
    const PromptConfig prompt = prompt_of(d["prompt"], dataset.num_classes);
    attach_images(support, dataset, render);
    const WaveformImage query = rasterize(test, render);
    const PromptBundle bundle =
        build_prompt(prompt, prompt.tier == PromptTier::ReasoningExamples ? &support : nullptr, query);
    write_bytes(bundle_path, bundle.to_json());
    std::cerr << "bundle: " << bundle_path << " (digest " << bundle.digest << ")\n";
  }
  return 0;
}

// --- query ---------------------------------------------------------------------------

json backend_json(const LayeredConfig& cfg) {
  // Only explicitly set keys, so kind-dependent defaults (model) still apply.
  const json ex = cfg.explicit_document();
  return ex.contains("backend") ? ex["backend"] : json::object();
}

int run_query(const LayeredConfig& cfg) {
  const json& d = cfg.document();
  const BackendConfig backend = BackendConfig::from_json(backend_json(cfg).dump());
  print_digest(cfg.digest());
  const PromptBundle bundle = PromptBundle::from_json(read_text(require(cfg, "/bundle", "--bundle")));

  VlmGateway::Options options;
  const std::string cache_dir = d["cache_dir"];
  options.cache = cache_dir.empty() ? std::make_shared<ResponseCache>() : std::make_shared<ResponseCache>(cache_dir);
  options.refresh = d["refresh_cache"];
  if (backend.kind == BackendKind::MockNearestSupport) {
    options.mock_provider = make_provider(d["embedding"], true);
    options.mock_cache = std::make_shared<EmbeddingCache>();
  }
  VlmGateway gateway(backend, std::move(options));
  const VlmResponse response = gateway.classify(bundle);
  spdlog::info("response in {:.1f} ms after {} attempt(s)", response.latency_ms, response.attempts);

  json out;
  out["prompt_digest"] = response.prompt_digest;
  out["backend_id"] = response.backend_id;
  out["from_cache"] = response.from_cache;
  out["raw_text"] = response.raw_text;
  if (const auto* label = std::get_if<ClassLabel>(&response.decision)) {
    out["label"] = label->value;
    out["class"] = bundle.class_names.at(static_cast<std::size_t>(label->value));
    out["parse_failure"] = false;
  } else {
    out["label"] = nullptr;
    out["class"] = nullptr;
    out["parse_failure"] = true;
  }
  emit(d["out"], out.dump(2) + "\n");
  return 0;
}

// --- evaluate / ablate ---------------------------------------------------------------

EvalConfig eval_config_of(const LayeredConfig& cfg) {
  json ex = cfg.explicit_document();
  ex.erase("ablation");
  return EvalConfig::from_json(ex.dump());
}

void write_report(const fs::path& dir, const EvalReport& report) {
  write_bytes(dir / "report.json", report.to_json());
  write_bytes(dir / "predictions.csv", report.to_csv());
  write_bytes(dir / "summary.txt", report.summary());
}

int audit_exit(const EvalReport& report) {
  if (report.audit.passed()) return 0;
  std::cerr << "error: leakage audit failed with " << report.audit.violations.size() << " violation(s)\n";
  for (const auto& v : report.audit.violations) std::cerr << "  " << v << "\n";
  return 1;
}

int run_evaluate(const LayeredConfig& cfg, const std::string& out, bool print_config) {
  const EvalConfig config = eval_config_of(cfg);
  print_digest(config.digest());
  if (print_config) {
    std::cout << config.to_json() << "\n";
    return 0;
  }
  if (out.empty()) throw UsageError("--out is required");
  if (config.manifest.empty()) throw UsageError("--manifest is required");
  const EvalReport report = run_loso(config);
  write_report(out, report);
  std::cout << report.summary();
  return audit_exit(report);
}

int run_ablate(const LayeredConfig& cfg, const std::string& out, bool print_config) {
  const EvalConfig config = eval_config_of(cfg);
  print_digest(config.digest());
  std::vector<Strategy> strategies;
  for (const auto& s : get<std::vector<std::string>>(cfg, "/ablation/strategies")) strategies.push_back(parse_strategy(s));
  std::vector<PromptTier> tiers;
  for (const auto& t : get<std::vector<std::string>>(cfg, "/ablation/tiers")) tiers.push_back(parse_prompt_tier(t));
  if (print_config) {
    std::cout << config.to_json() << "\n";
    return 0;
  }
  if (out.empty()) throw UsageError("--out is required");
  if (config.manifest.empty()) throw UsageError("--manifest is required");

  EvalResources resources = make_resources(config);
  const DatasetManifest dataset = prepare_dataset(load_manifest(config.manifest), config);
  const std::vector<EvalReport> reports = run_ablation(config, strategies, tiers, dataset, resources);
  int status = 0;
  for (const auto& r : reports) {
    write_report(fs::path(out) / (r.strategy + "__" + r.tier), r);
    status = std::max(status, audit_exit(r));
  }
  const std::string table = ablation_table(reports);
  write_bytes(fs::path(out) / "ablation.csv", table);
  std::cout << table;
  return status;
}

// --- export-embeddings ---------------------------------------------------------------

int run_export(const LayeredConfig& cfg) {
  print_digest(cfg.digest());
  const EmbeddingStore store = EmbeddingStore::load(require(cfg, "/store", "--store"));
  std::optional<DatasetManifest> dataset;
  const auto manifest = get<std::string>(cfg, "/manifest");
  if (!manifest.empty()) dataset = load_manifest(manifest);

  std::ostringstream os;
  os << "digest\tsubject_id\ttrial_index\tlabel\tconfig_digest";
  for (std::size_t i = 0; i < store.dimension(); ++i) os << "\tv" << i;
  os << '\n';
  auto write_vector = [&](const std::vector<float>& v) {
    char buf[32];
    for (float x : v) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(x));
      os << '\t' << buf;
    }
    os << '\n';
  };

  std::set<std::string> indexed;
  for (const auto& [key, digest] : store.index_entries()) {
    const auto v = store.find(digest);
    if (!v) continue;
    indexed.insert(digest);
    std::string label;
    if (dataset) {
      try {
        label = std::to_string(dataset->trial(key.trial).label().value);
      } catch (const DatasetError&) {
      }
    }
    os << digest << '\t' << key.trial.subject_id << '\t' << key.trial.trial_index << '\t' << label << '\t'
       << key.config_digest;
    write_vector(*v);
  }
  for (const auto& [digest, v] : store.records()) {
    if (indexed.contains(digest)) continue;
    os << digest << "\t\t\t\t";
    write_vector(v);
  }
  emit(get<std::string>(cfg, "/out"), os.str());
  return 0;
}

std::vector<Setting> with_render(std::vector<Setting> settings) {
  const auto r = cli::render_settings();
  settings.insert(settings.end(), r.begin(), r.end());
  return settings;
}

int run(int argc, char** argv) {
  CLI::App app{"waveprompt: few-shot EEG waveform classification with vision-language models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "layered config JSON (file < environment < flags)")
      ->envname("WAVEPROMPT_CONFIG");
  g.jobs_opt = app.add_option("--jobs", g.jobs, "worker threads [env WAVEPROMPT_JOBS]");
  app.add_option("--log-level", g.log_level, "trace | debug | info | warn | error | off")
      ->envname("WAVEPROMPT_LOG_LEVEL")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  g.no_cache_opt = app.add_flag("--no-cache", g.no_cache, "refresh cached responses [env WAVEPROMPT_NO_CACHE]");

  std::vector<std::unique_ptr<Command>> commands;
  const auto eval_pool = cli::evaluation_settings();

  {
    json d = {{"out", ""},
              {"seed", 0},
              {"synth",
               {{"name", "synthetic"},
                {"subjects", 4},
                {"trials_per_class", {20, 20}},
                {"channels", 18},
                {"rate", 250.0},
                {"duration", 4.0},
                {"noise_uv", 10.0},
                {"rhythm_uv", 60.0},
                {"rhythm_hz", 3.0}}},
              {"embeddings",
               {{"out", ""}, {"dim", 32}, {"class_scale", 1.0}, {"subject_scale", 0.3}, {"noise_scale", 0.05},
                {"label_noise", 0.0}}},
              {"render", render_defaults()}};
    auto& c = add_command(commands, app, "synth", "write a seeded synthetic dataset (and optional embeddings)", d,
                          with_render({
                              {"--out", "/out", K::String, "output dataset directory"},
                              {"--seed", "/seed", K::UInt, "generator seed"},
                              {"--name", "/synth/name", K::String, "dataset name"},
                              {"--subjects", "/synth/subjects", K::UInt, "number of subjects"},
                              {"--trials-per-class", "/synth/trials_per_class", K::IntList, "trials per class, e.g. 20,20"},
                              {"--channels", "/synth/channels", K::UInt, "channels per trial"},
                              {"--rate", "/synth/rate", K::Number, "sampling rate (Hz)"},
                              {"--duration", "/synth/duration", K::Number, "trial duration (s)"},
                              {"--noise", "/synth/noise_uv", K::Number, "background noise amplitude (uV)"},
                              {"--rhythm", "/synth/rhythm_uv", K::Number, "rhythmic component amplitude (uV)"},
                              {"--rhythm-hz", "/synth/rhythm_hz", K::Number, "rhythmic component frequency (Hz)"},
                              {"--embeddings", "/embeddings/out", K::String, "also write a synthetic embedding store here"},
                              {"--dim", "/embeddings/dim", K::UInt, "synthetic embedding dimension"},
                              {"--class-scale", "/embeddings/class_scale", K::Number, "class direction weight"},
                              {"--subject-scale", "/embeddings/subject_scale", K::Number, "subject offset weight"},
                              {"--noise-scale", "/embeddings/noise_scale", K::Number, "isotropic noise weight"},
                              {"--label-noise", "/embeddings/label_noise", K::Number, "probability of a flipped class direction"},
                          }));
    c.run = run_synth;
  }
  {
    json d = {{"manifest", ""}, {"subject", ""}, {"trial", -1}, {"out", ""}, {"jobs", 1}, {"render", render_defaults()}};
    auto settings = with_render({
        {"--manifest", "/manifest", K::String, "dataset manifest.json"},
        {"--subject", "/subject", K::String, "subject id (default: all)"},
        {"--trial", "/trial", K::Int, "trial index (default: all of the subject)"},
        {"--out", "/out", K::String, "output directory for PNGs"},
    });
    auto& c = add_command(commands, app, "render", "rasterize trials to PNG", d, std::move(settings),
                          {{"--render-config", "--config"}});
    c.run = run_render;
  }
  {
    json d = {{"manifest", ""},
              {"jobs", 1},
              {"embedding", {{"provider", "file"}, {"store", ""}, {"url", ""}, {"timeout_s", 30.0}}},
              {"render", render_defaults()}};
    auto& c = add_command(commands, app, "embed", "embed every trial's render into an embedding store", d,
                          pick(eval_pool, d));
    c.run = run_embed;
  }
  {
    json d = {{"manifest", ""},
              {"test_subject", ""},
              {"test_trial", 0},
              {"out", "-"},
              {"bundle", ""},
              {"jobs", 1},
              {"selection", {{"shots", 2}, {"strategy", "rep-sim"}, {"seed", 0}}},
              {"prompt", {{"tier", "reasoning-examples"}, {"class_names", json::array()}, {"template_dir", ""}}},
              {"embedding", {{"provider", "file"}, {"store", ""}, {"url", ""}, {"timeout_s", 30.0}}},
              {"render", render_defaults()}};
    auto settings = pick(eval_pool, d);
    settings.push_back({"--test-subject", "/test_subject", K::String, "held-out subject id"});
    settings.push_back({"--test-trial", "/test_trial", K::UInt, "query trial index"});
    settings.push_back({"--out", "/out", K::String, "support set JSON (default: stdout)"});
    settings.push_back({"--bundle", "/bundle", K::String, "also write the prompt bundle here"});
    auto& c = add_command(commands, app, "select", "choose the few-shot support set for one query", d,
                          std::move(settings));
    c.run = run_select;
  }
  {
    json d = {{"bundle", ""},
              {"out", "-"},
              {"backend", json::parse(BackendConfig{}.to_json())},
              {"embedding", {{"provider", "file"}, {"store", ""}, {"url", ""}, {"timeout_s", 30.0}}},
              {"cache_dir", ""},
              {"refresh_cache", false}};
    auto settings = pick(eval_pool, d);
    settings.push_back({"--bundle", "/bundle", K::String, "prompt bundle JSON"});
    settings.push_back({"--out", "/out", K::String, "response JSON (default: stdout)"});
    auto& c = add_command(commands, app, "query", "send one prompt bundle to the backend", d, std::move(settings));
    c.run = run_query;
  }

  std::string eval_out;
  bool print_config = false;
  {
    json d = json::parse(EvalConfig{}.to_json());
    auto& c = add_command(commands, app, "evaluate", "leave-one-subject-out evaluation", d, pick(eval_pool, d));
    c.strict_file = true;
    c.app->add_option("--out", eval_out, "report directory (report.json, predictions.csv, summary.txt)");
    c.app->add_flag("--print-config", print_config, "print the resolved config and exit");
    c.run = [&](const LayeredConfig& cfg) { return run_evaluate(cfg, eval_out, print_config); };
  }
  {
    json d = json::parse(EvalConfig{}.to_json());
    d["ablation"] = {{"strategies", {"random", "anchor", "rep", "rep-sim"}},
                     {"tiers", {"base", "reasoning", "reasoning-examples"}}};
    auto settings = pick(eval_pool, d);
    settings.push_back({"--strategies", "/ablation/strategies", K::List, "strategies to compare"});
    settings.push_back({"--tiers", "/ablation/tiers", K::List, "prompt tiers to compare"});
    auto& c = add_command(commands, app, "ablate", "evaluate every strategy x tier combination", d, std::move(settings));
    c.strict_file = true;
    c.app->add_option("--out", eval_out, "output directory (one report per combination plus ablation.csv)");
    c.app->add_flag("--print-config", print_config, "print the resolved config and exit");
    c.run = [&](const LayeredConfig& cfg) { return run_ablate(cfg, eval_out, print_config); };
  }
  {
    json d = {{"store", ""}, {"out", "-"}, {"manifest", ""}};
    auto& c = add_command(commands, app, "export-embeddings", "dump an embedding store as TSV", d,
                          {
                              {"--store", "/store", K::String, "embedding store directory"},
                              {"--out", "/out", K::String, "TSV file (default: stdout)"},
                              {"--manifest", "/manifest", K::String, "manifest for the label column"},
                          });
    c.run = run_export;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto logger = spdlog::stderr_color_mt("waveprompt");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  for (auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    try {
      resolve(*cmd, g);
      return cmd->run(*cmd->config);
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const LookupMiss& e) {
      std::cerr << "error: " << e.what() << "\n";
      for (const auto& d : e.missing()) std::cerr << "missing " << d << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
