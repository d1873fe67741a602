// Copyright 2026 The waveprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "waveprompt/error.hpp"
#include "waveprompt/evaluation.hpp"

namespace waveprompt {

using nlohmann::json;

namespace {

constexpr std::string_view kReportFormat = "waveprompt-report/1";

json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Evaluated:
      return "evaluated";
    case TrialStatus::Excluded:
      return "excluded";
    case TrialStatus::Skipped:
      return "skipped";
    case TrialStatus::Failed:
      return "failed";
  }
  return "unknown";
}

TrialStatus parse_trial_status(std::string_view text) {
  if (text == "evaluated") return TrialStatus::Evaluated;
  if (text == "excluded") return TrialStatus::Excluded;
  if (text == "skipped") return TrialStatus::Skipped;
  if (text == "failed") return TrialStatus::Failed;
  throw Error("unknown trial status '" + std::string(text) + "'");
}

void finalize_report(EvalReport& report, int num_classes) {
  report.evaluated = report.excluded = report.skipped = report.failed = 0;
  report.parse_failures = report.fallbacks = 0;
  double sum = 0.0;
  report.subjects_in_mean = 0;
  for (auto& s : report.subjects) {
    s.confusion = make_confusion(num_classes);
    s.evaluated = s.excluded = s.skipped = s.failed = s.parse_failures = s.fallbacks = 0;
    for (const auto& p : s.predictions) {
      if (p.parse_failure) ++s.parse_failures;
      if (p.fallback) ++s.fallbacks;
      switch (p.status) {
        case TrialStatus::Evaluated:
          if (!p.scored_label) throw Error("evaluated prediction without a scored label");
          ++s.confusion.at(static_cast<std::size_t>(p.true_label)).at(static_cast<std::size_t>(*p.scored_label));
          ++s.evaluated;
          break;
        case TrialStatus::Excluded:
          ++s.excluded;
          break;
        case TrialStatus::Skipped:
          ++s.skipped;
          break;
        case TrialStatus::Failed:
          ++s.failed;
          break;
      }
    }
    try {
      s.bca = bca(s.confusion);
      s.bca_note.clear();
      sum += *s.bca;
      ++report.subjects_in_mean;
    } catch (const MetricError& e) {
      s.bca.reset();
      s.bca_note = std::string("excluded from mean: ") + e.what();
    }
    report.evaluated += s.evaluated;
    report.excluded += s.excluded;
    report.skipped += s.skipped;
    report.failed += s.failed;
    report.parse_failures += s.parse_failures;
    report.fallbacks += s.fallbacks;
  }
  if (report.subjects_in_mean > 0) {
    report.mean_bca = sum / static_cast<double>(report.subjects_in_mean);
  } else {
    report.mean_bca.reset();
  }
}

std::string EvalReport::to_json() const {
  json j;
  j["format"] = kReportFormat;
  j["config"] = json::parse(config_json);
  j["config_digest"] = config_digest;
  j["template_version"] = template_version;
  j["render_digest"] = render_digest;
  j["embedding_model"] = embedding_model;
  j["backend_id"] = backend_id;
  j["strategy"] = strategy;
  j["tier"] = tier;
  j["class_names"] = class_names;
  j["aggregate"] = {{"mean_bca", opt(mean_bca)},
                    {"subjects_in_mean", subjects_in_mean},
                    {"evaluated", evaluated},
                    {"excluded", excluded},
                    {"skipped", skipped},
                    {"failed", failed},
                    {"parse_failures", parse_failures},
                    {"fallbacks", fallbacks}};
  j["cache"] = {{"requests", cache.requests},
                {"cache_hits", cache.cache_hits},
                {"backend_calls", cache.backend_calls},
                {"retries", cache.retries}};
  j["audit"] = {{"bundles", audit.bundles},
                {"example_images", audit.example_images},
                {"violations", audit.violations},
                {"passed", audit.passed()}};
  j["external_baselines"] = external_baselines;
  j["subjects"] = json::array();
  for (const auto& s : subjects) {
    json js{{"subject_id", s.subject_id},
            {"confusion", s.confusion},
            {"bca", opt(s.bca)},
            {"bca_note", s.bca_note},
            {"evaluated", s.evaluated},
            {"excluded", s.excluded},
            {"skipped", s.skipped},
            {"failed", s.failed},
            {"parse_failures", s.parse_failures},
            {"fallbacks", s.fallbacks}};
    js["predictions"] = json::array();
    for (const auto& p : s.predictions) {
      json jp{{"trial_index", p.trial_index},
              {"true_label", p.true_label},
              {"predicted", opt(p.predicted)},
              {"scored_label", opt(p.scored_label)},
              {"parse_failure", p.parse_failure},
              {"from_cache", p.from_cache},
              {"fallback", p.fallback},
              {"status", to_string(p.status)},
              {"note", p.note},
              {"prompt_digest", p.prompt_digest},
              {"raw_response", p.raw_response}};
      jp["support"] = json::array();
      for (const auto& e : p.support) {
        jp["support"].push_back({{"subject_id", e.source.subject_id},
                                 {"trial_index", e.source.trial_index},
                                 {"label", e.label},
                                 {"score", opt(e.score)}});
      }
      js["predictions"].push_back(std::move(jp));
    }
    j["subjects"].push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != kReportFormat) throw Error("not an evaluation report document");
    r.config_json = j.at("config").dump(2);
    r.config_digest = j.at("config_digest").get<std::string>();
    r.template_version = j.at("template_version").get<std::string>();
    r.render_digest = j.at("render_digest").get<std::string>();
    r.embedding_model = j.at("embedding_model").get<std::string>();
    r.backend_id = j.at("backend_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.tier = j.at("tier").get<std::string>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    const json& a = j.at("aggregate");
    r.mean_bca = get_opt<double>(a, "mean_bca");
    r.subjects_in_mean = a.at("subjects_in_mean").get<std::size_t>();
    r.evaluated = a.at("evaluated").get<std::size_t>();
    r.excluded = a.at("excluded").get<std::size_t>();
    r.skipped = a.at("skipped").get<std::size_t>();
    r.failed = a.at("failed").get<std::size_t>();
    r.parse_failures = a.at("parse_failures").get<std::size_t>();
    r.fallbacks = a.at("fallbacks").get<std::size_t>();
    const json& c = j.at("cache");
    r.cache = {c.at("requests").get<std::size_t>(), c.at("cache_hits").get<std::size_t>(),
               c.at("backend_calls").get<std::size_t>(), c.at("retries").get<std::size_t>()};
    r.audit.bundles = j.at("audit").at("bundles").get<std::size_t>();
    r.audit.example_images = j.at("audit").at("example_images").get<std::size_t>();
    r.audit.violations = j.at("audit").at("violations").get<std::vector<std::string>>();
    r.external_baselines = j.at("external_baselines").get<std::map<std::string, double>>();
    for (const auto& js : j.at("subjects")) {
      SubjectResult s;
      s.subject_id = js.at("subject_id").get<std::string>();
      s.confusion = js.at("confusion").get<ConfusionMatrix>();
      s.bca = get_opt<double>(js, "bca");
      s.bca_note = js.at("bca_note").get<std::string>();
      s.evaluated = js.at("evaluated").get<std::size_t>();
      s.excluded = js.at("excluded").get<std::size_t>();
      s.skipped = js.at("skipped").get<std::size_t>();
      s.failed = js.at("failed").get<std::size_t>();
      s.parse_failures = js.at("parse_failures").get<std::size_t>();
      s.fallbacks = js.at("fallbacks").get<std::size_t>();
      for (const auto& jp : js.at("predictions")) {
        Prediction p;
        p.trial_index = jp.at("trial_index").get<std::uint32_t>();
        p.true_label = jp.at("true_label").get<int>();
        p.predicted = get_opt<int>(jp, "predicted");
        p.scored_label = get_opt<int>(jp, "scored_label");
        p.parse_failure = jp.at("parse_failure").get<bool>();
        p.from_cache = jp.at("from_cache").get<bool>();
        p.fallback = jp.at("fallback").get<bool>();
        p.status = parse_trial_status(jp.at("status").get<std::string>());
        p.note = jp.at("note").get<std::string>();
        p.prompt_digest = jp.at("prompt_digest").get<std::string>();
        p.raw_response = jp.at("raw_response").get<std::string>();
        for (const auto& je : jp.at("support")) {
          p.support.push_back({{je.at("subject_id").get<std::string>(), je.at("trial_index").get<std::uint32_t>()},
                               je.at("label").get<int>(),
                               get_opt<double>(je, "score")});
        }
        s.predictions.push_back(std::move(p));
      }
      r.subjects.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_csv() const {
  const auto name = [&](const std::optional<int>& label) -> std::string {
    if (!label || *label < 0 || static_cast<std::size_t>(*label) >= class_names.size()) return "";
    return class_names[static_cast<std::size_t>(*label)];
  };
  std::ostringstream os;
  os << "subject_id,trial_index,true_label,true_class,predicted_label,predicted_class,scored_label,parse_failure,"
        "from_cache,fallback,status,note,prompt_digest,external_baseline\n";
  for (const auto& s : subjects) {
    for (const auto& p : s.predictions) {
      os << csv_field(s.subject_id) << ',' << p.trial_index << ',' << p.true_label << ','
         << csv_field(name(p.true_label)) << ',' << (p.predicted ? std::to_string(*p.predicted) : "") << ','
         << csv_field(name(p.predicted)) << ',' << (p.scored_label ? std::to_string(*p.scored_label) : "") << ','
         << (p.parse_failure ? 1 : 0) << ',' << (p.from_cache ? 1 : 0) << ',' << (p.fallback ? 1 : 0) << ','
         << to_string(p.status) << ',' << csv_field(p.note) << ',' << p.prompt_digest << ",\n";
    }
  }
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os << "strategy " << strategy << ", tier " << tier << ", backend " << backend_id << "\n";
  for (const auto& s : subjects) {
    os << "  " << s.subject_id << ": BCA " << (s.bca ? fixed(*s.bca, 2) : "n/a") << " (" << s.evaluated
       << " evaluated, " << s.skipped << " skipped, " << s.failed << " failed, " << s.parse_failures
       << " parse failures)";
    if (!s.bca_note.empty()) os << " " << s.bca_note;
    os << "\n";
  }
  os << "mean BCA " << (mean_bca ? fixed(*mean_bca, 2) : "n/a") << " over " << subjects_in_mean << " subject(s)\n";
  os << "cache: " << cache.cache_hits << " hits, " << cache.backend_calls << " backend calls, " << cache.retries
     << " retries\n";
  os << "audit: " << (audit.passed() ? "passed" : "FAILED") << " (" << audit.bundles << " bundles, "
     << audit.example_images << " example images, " << audit.violations.size() << " violations)\n";
  return os.str();
}

std::string ablation_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "strategy,tier,mean_bca,subjects_in_mean,evaluated,skipped,failed,parse_failures,fallbacks,cache_hits,"
        "backend_calls,audit_passed\n";
  for (const auto& r : reports) {
    os << r.strategy << ',' << r.tier << ',' << (r.mean_bca ? fixed(*r.mean_bca, 4) : "") << ',' << r.subjects_in_mean
       << ',' << r.evaluated << ',' << r.skipped << ',' << r.failed << ',' << r.parse_failures << ',' << r.fallbacks
       << ',' << r.cache.cache_hits << ',' << r.cache.backend_calls << ',' << (r.audit.passed() ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace waveprompt
