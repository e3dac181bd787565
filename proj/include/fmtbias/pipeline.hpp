#pragma once

// End-to-end experiment driver: config -> cases -> conversion -> corruption
// -> filter -> order -> answers -> verdicts -> metrics, with every stage's
// output persisted under output_dir and a manifest describing the run.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fmtbias/adjudication.hpp"
#include "fmtbias/conversion.hpp"
#include "fmtbias/corpus.hpp"
#include "fmtbias/corruption.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/jsonl.hpp"
#include "fmtbias/metrics.hpp"
#include "fmtbias/mock_script.hpp"

namespace fmtbias {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class ConditionKind { FormatPair, Richness, Corruption, Homogeneous };

inline std::string_view to_string(ConditionKind k) noexcept {
  switch (k) {
    case ConditionKind::FormatPair: return "FormatPair";
    case ConditionKind::Richness: return "Richness";
    case ConditionKind::Corruption: return "Corruption";
    case ConditionKind::Homogeneous: return "Homogeneous";
  }
  return "FormatPair";
}

inline ConditionKind parse_condition_kind(std::string_view s) {
  for (auto k : {ConditionKind::FormatPair, ConditionKind::Richness, ConditionKind::Corruption,
                 ConditionKind::Homogeneous}) {
    if (text::iequals(s, to_string(k))) return k;
  }
  throw Error(Errc::Config, "unknown condition kind '" + std::string(s) + "'");
}

inline constexpr std::array<std::size_t, 3> kEntryLevels = {4, 8, 12};
inline constexpr std::array<double, 3> kCorruptionLevels = {0.0, 0.45, 0.9};

struct Condition {
  std::string name;
  ConditionKind kind = ConditionKind::FormatPair;
  FormatKind format_a = FormatKind::Table;
  FormatKind format_b = FormatKind::Text;
  std::optional<std::size_t> entries_a;
  std::optional<std::size_t> entries_b;
  std::optional<double> p_a;
  std::optional<double> p_b;

  std::string default_name() const {
    std::string n = std::string(plural_name(format_a));
    if (entries_a) n += "(" + std::to_string(*entries_a) + ")";
    if (p_a && *p_a > 0) n += "(p=" + format_real(*p_a) + ")";
    n += " vs " + std::string(plural_name(format_b));
    if (entries_b) n += "(" + std::to_string(*entries_b) + ")";
    if (p_b && *p_b > 0) n += "(p=" + format_real(*p_b) + ")";
    return n;
  }

  void check() const {
    auto bad = [&](const std::string& why) { throw Error(Errc::Config, "condition '" + name + "': " + why); };
    for (auto [e, f] : {std::pair{entries_a, format_a}, std::pair{entries_b, format_b}}) {
      if (!e) continue;
      if (f == FormatKind::Text) bad("entry counts apply to structured formats only");
      if (kind == ConditionKind::Richness &&
          std::find(kEntryLevels.begin(), kEntryLevels.end(), *e) == kEntryLevels.end()) {
        bad("richness entries must be 4, 8 or 12");
      }
      if (*e == 0) bad("entry count must be positive");
    }
    for (auto [p, f] : {std::pair{p_a, format_a}, std::pair{p_b, format_b}}) {
      if (!p) continue;
      if (*p < 0.0 || *p > 1.0) bad("corruption probability outside [0, 1]");
      if (*p > 0.0 && f == FormatKind::Text) bad("plain text cannot be corrupted");
      if (kind == ConditionKind::Corruption &&
          std::find(kCorruptionLevels.begin(), kCorruptionLevels.end(), *p) == kCorruptionLevels.end()) {
        bad("corruption p must be 0, 0.45 or 0.9");
      }
    }
    if (kind == ConditionKind::Homogeneous && format_a != format_b) bad("homogeneous conditions need one format");
    if (kind == ConditionKind::FormatPair && format_a == format_b) bad("format pairs need two distinct formats");
  }

  FormatAssignmentPolicy policy() const {
    FormatAssignmentPolicy p;
    p.condition = name;
    p.format_a = format_a;
    p.format_b = format_b;
    p.entries_a = entries_a;
    p.entries_b = entries_b;
    p.p_a = p_a.value_or(0.0);
    p.p_b = p_b.value_or(0.0);
    return p;
  }
};

inline Condition condition_from_json(const nlohmann::json& j) {
  Condition c;
  c.kind = parse_condition_kind(j.value("kind", "FormatPair"));
  c.format_a = parse_format_kind(j.at("format_a").get<std::string>());
  c.format_b = parse_format_kind(j.at("format_b").get<std::string>());
  c.entries_a = detail::get_opt<std::size_t>(j, "entries_a");
  c.entries_b = detail::get_opt<std::size_t>(j, "entries_b");
  c.p_a = detail::get_opt<double>(j, "p_a");
  c.p_b = detail::get_opt<double>(j, "p_b");
  c.name = j.value("name", c.default_name());
  c.check();
  return c;
}

struct Seeds {
  std::uint64_t build = 1;
  std::uint64_t order = 2;
  std::uint64_t corruption = 3;
  std::uint64_t sampling = 4;
};

enum class FilterMode { PerModel, Reference, Off };

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  std::vector<std::string> models;
  std::string converter_model = "gpt-4o-mini";
  std::string judge_model = "gpt-4o-mini";
  double judge_temperature = 0.0;
  int max_tokens = 1024;
  std::vector<Condition> conditions;
  Seeds seeds;
  std::filesystem::path output_dir = "fmtbias_out";
  std::optional<std::filesystem::path> cache_dir;
  std::vector<BackendConfig> backends;
  std::optional<std::filesystem::path> mock_script;
  bool mock = false;
  FilterMode filter_mode = FilterMode::PerModel;
  std::string filter_model;
  int filter_trials = kFilterTrials;
  std::vector<std::string> group_by = {"model", "format_pair"};
  BinomialMethod binomial_method = BinomialMethod::DoubledTail;
  std::vector<std::string> replacement_alphabet = default_replacement_alphabet();
  std::size_t workers = 0;
  int mock_max_in_flight = 8;
  nlohmann::json raw;  // effective config, as hashed

  std::filesystem::path cache_path() const { return cache_dir.value_or(output_dir / "cache"); }
  std::string hash() const { return sha256_hex(raw.dump()); }
};

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// `base_dir` anchors relative paths (normally the config file's directory).
inline ExperimentConfig config_from_json(nlohmann::json j, const std::filesystem::path& base_dir = {},
                                         std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (seed_override) {
    j["seeds"] = {{"build", *seed_override}, {"order", *seed_override}, {"corruption", *seed_override},
                  {"sampling", *seed_override}};
  }
  ExperimentConfig c;
  c.raw = j;
  try {
    c.corpus_path = resolve_path(base_dir, j.at("corpus_path").get<std::string>());
    c.models = j.at("models").get<std::vector<std::string>>();
    c.converter_model = j.value("converter_model", c.converter_model);
    c.judge_model = j.value("judge_model", c.judge_model);
    c.judge_temperature = j.value("judge_temperature", c.judge_temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    for (const auto& cj : j.at("conditions")) c.conditions.push_back(condition_from_json(cj));
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.seeds.build = s.value("build", c.seeds.build);
      c.seeds.order = s.value("order", c.seeds.order);
      c.seeds.corruption = s.value("corruption", c.seeds.corruption);
      c.seeds.sampling = s.value("sampling", c.seeds.sampling);
    }
    c.output_dir = resolve_path(base_dir, j.value("output_dir", c.output_dir.string()));
    if (j.contains("cache_dir")) c.cache_dir = resolve_path(base_dir, j["cache_dir"].get<std::string>());
    for (const auto& b : j.value("backends", nlohmann::json::array())) c.backends.push_back(backend_config_from_json(b));
    if (j.contains("mock_script")) c.mock_script = resolve_path(base_dir, j["mock_script"].get<std::string>());
    c.mock = j.value("mock", false);
    c.mock_max_in_flight = j.value("mock_max_in_flight", c.mock_max_in_flight);
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      const std::string mode = f.value("mode", "per_model");
      if (mode == "per_model") {
        c.filter_mode = FilterMode::PerModel;
      } else if (mode == "reference") {
        c.filter_mode = FilterMode::Reference;
      } else if (mode == "off") {
        c.filter_mode = FilterMode::Off;
      } else {
        throw Error(Errc::Config, "filter.mode must be per_model, reference or off");
      }
      c.filter_model = f.value("model", "");
      c.filter_trials = f.value("trials", c.filter_trials);
    }
    if (j.contains("group_by")) c.group_by = j["group_by"].get<std::vector<std::string>>();
    const std::string bm = j.value("binomial_method", "doubled");
    if (bm == "doubled") {
      c.binomial_method = BinomialMethod::DoubledTail;
    } else if (bm == "minlike") {
      c.binomial_method = BinomialMethod::MinLikelihood;
    } else {
      throw Error(Errc::Config, "binomial_method must be 'doubled' or 'minlike'");
    }
    if (j.contains("replacement_alphabet")) {
      c.replacement_alphabet = j["replacement_alphabet"].get<std::vector<std::string>>();
    }
    c.workers = j.value("workers", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, std::string("config: ") + e.what());
  }
  if (c.models.empty()) throw Error(Errc::Config, "config lists no models");
  if (c.conditions.empty()) throw Error(Errc::Config, "config lists no conditions");
  if (c.filter_mode == FilterMode::Reference && c.filter_model.empty()) {
    throw Error(Errc::Config, "filter.mode = reference needs filter.model");
  }
  if (c.filter_trials < 1) throw Error(Errc::Config, "filter.trials must be >= 1");
  for (const auto& k : c.group_by) {
    if (std::find(known_group_keys().begin(), known_group_keys().end(), k) == known_group_keys().end()) {
      throw Error(Errc::UnknownGroupKey, "unknown group key '" + k + "'");
    }
  }
  validate_corruption_spec({0.0, c.replacement_alphabet, 0});
  std::set<std::string> names;
  for (const auto& cond : c.conditions) {
    if (!names.insert(cond.name).second) throw Error(Errc::Config, "duplicate condition name '" + cond.name + "'");
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path,
                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(jsonl::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, "config '" + path.string() + "': " + e.what());
  }
  return config_from_json(std::move(j), path.parent_path(), seed_override);
}

// Mock mode routes every model to the scripted backend; otherwise HTTP
// backends from the config are used.
inline std::unique_ptr<Gateway> make_gateway(const ExperimentConfig& cfg, bool use_cache = true) {
  auto gw = use_cache ? std::make_unique<Gateway>(cfg.cache_path()) : std::make_unique<Gateway>();
  gw->set_max_tokens(cfg.max_tokens);
  if (cfg.mock) {
    MockScript script = cfg.mock_script ? MockScript::load(*cfg.mock_script) : MockScript{};
    BackendConfig b;
    b.name = "mock";
    b.max_in_flight = cfg.mock_max_in_flight;
    b.retry_max = 0;
    b.backoff_base_ms = 0;
    gw->add_backend(b, std::make_shared<MockChatBackend>(script.responder()));
  } else {
    if (cfg.backends.empty()) throw Error(Errc::Config, "no backends configured (use mock mode for offline runs)");
    for (const auto& b : cfg.backends) gw->add_http_backend(b);
  }
  return gw;
}

// ---- stages -----------------------------------------------------------------

struct Attrition {
  std::size_t records = 0;
  std::size_t cases_built = 0;
  std::size_t conversion_jobs = 0;
  std::size_t conversion_failed_jobs = 0;
  std::size_t cases_dropped_conversion = 0;
  std::size_t cases_after_conversion = 0;
  std::size_t payloads_corrupted = 0;
  std::map<std::string, nlohmann::json> filter;  // per filter model
  std::size_t answers_requested = 0;
  std::size_t answers_failed = 0;
  std::size_t verdicts = 0;
  std::size_t verdicts_absent = 0;
  std::size_t truncated = 0;
};

inline nlohmann::json to_json(const Attrition& a) {
  return {{"records", a.records},
          {"cases_built", a.cases_built},
          {"conversion_jobs", a.conversion_jobs},
          {"conversion_failed_jobs", a.conversion_failed_jobs},
          {"cases_dropped_conversion", a.cases_dropped_conversion},
          {"cases_after_conversion", a.cases_after_conversion},
          {"payloads_corrupted", a.payloads_corrupted},
          {"filter", a.filter},
          {"answers_requested", a.answers_requested},
          {"answers_failed", a.answers_failed},
          {"verdicts", a.verdicts},
          {"verdicts_absent", a.verdicts_absent},
          {"truncated_completions", a.truncated}};
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline std::vector<ContradictionCase> stage_build(const std::vector<ClaimRecord>& records,
                                                  const std::vector<Condition>& conditions, std::uint64_t seed) {
  std::vector<ContradictionCase> out;
  for (const auto& cond : conditions) {
    auto cs = build_contradiction_cases(records, cond.policy(), seed);
    out.insert(out.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
  }
  return out;
}

struct ConversionFailure {
  std::string case_id;
  char side = 'A';
  std::string error_code;
  std::string error;
};

// Converts every structured payload. Identical jobs (same claim, evidence,
// target and count) are sent once. Cases with a rejected payload are dropped
// and reported in `failures`.
inline std::vector<ContradictionCase> stage_convert(Gateway& gw, std::vector<ContradictionCase> cases,
                                                    const ConversionOptions& opt, std::size_t workers,
                                                    std::vector<ConversionFailure>& failures, Attrition& att) {
  struct JobState {
    ConversionJob job;
    std::optional<ConvertedBody> result;
    Errc code = Errc::ConversionInvalid;
    std::string error;
  };
  std::vector<JobState> jobs;
  std::map<std::string, std::size_t> job_index;
  std::vector<std::pair<EvidencePayload*, std::size_t>> links;
  std::vector<std::pair<std::size_t, char>> link_case;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    auto& c = cases[ci];
    for (char side : {'A', 'B'}) {
      auto& p = side == 'A' ? c.evidence_a : c.evidence_b;
      if (p.kind == FormatKind::Text || p.converted) continue;
      const std::string& claim = side == 'A' ? c.claim_a : c.claim_b;
      nlohmann::json key = {claim, p.source_text, to_string(p.kind), p.target_entries ? *p.target_entries : 0};
      const std::string k = key.dump();
      auto [it, fresh] = job_index.emplace(k, jobs.size());
      if (fresh) {
        JobState js;
        js.job = {"conv-" + sha256_hex(k).substr(0, 16), claim, p.source_text, p.kind, p.target_entries};
        jobs.push_back(std::move(js));
      }
      links.emplace_back(&p, it->second);
      link_case.emplace_back(ci, side);
    }
  }
  att.conversion_jobs = jobs.size();
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    try {
      jobs[i].result = convert(gw, jobs[i].job, opt);
    } catch (const Error& e) {
      jobs[i].code = e.code();
      jobs[i].error = e.what();
    }
  });
  std::set<std::size_t> dropped;
  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto& js = jobs[links[l].second];
    auto& p = *links[l].first;
    if (js.result) {
      p.body = js.result->body;
      p.entry_count = js.result->entry_count;
      p.converted = true;
    } else {
      dropped.insert(link_case[l].first);
      failures.push_back({cases[link_case[l].first].case_id, link_case[l].second, std::string(errc_name(js.code)), js.error});
    }
  }
  for (const auto& js : jobs) {
    if (!js.result) ++att.conversion_failed_jobs;
  }
  std::vector<ContradictionCase> kept;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    if (!dropped.count(ci)) kept.push_back(std::move(cases[ci]));
  }
  att.cases_dropped_conversion = dropped.size();
  att.cases_after_conversion = kept.size();
  if (!dropped.empty()) spdlog::warn("conversion: {} case(s) excluded", dropped.size());
  return kept;
}

// Document-level seed: the same converted body gets the same token draws in
// every condition, so p=0.9 replaces a superset of what p=0.45 replaces.
inline std::uint64_t corruption_seed(std::uint64_t base, const std::string& body) {
  return hash_combine(base, body);
}

inline void corrupt_payload(EvidencePayload& p, std::uint64_t base_seed, const std::vector<std::string>& alphabet) {
  if (p.kind == FormatKind::Text || p.corruption_p <= 0.0 || !p.corruption.is_null()) return;
  CorruptionSpec spec{p.corruption_p, alphabet, corruption_seed(base_seed, p.body)};
  const auto res = corrupt(p.kind, p.body, spec);
  p.corruption = {{"p", spec.p},
                  {"seed", spec.seed},
                  {"alphabet", spec.replacement_alphabet},
                  {"tokens_total", res.tokens_total},
                  {"tokens_replaced", res.tokens_replaced}};
  p.body = res.text;
}

inline void stage_corrupt(std::vector<ContradictionCase>& cases, std::uint64_t seed,
                          const std::vector<std::string>& alphabet, Attrition& att) {
  for (auto& c : cases) {
    for (auto* p : {&c.evidence_a, &c.evidence_b}) {
      const bool before = p->corruption.is_null();
      corrupt_payload(*p, seed, alphabet);
      if (before && !p->corruption.is_null()) ++att.payloads_corrupted;
    }
  }
}

inline void stage_randomize(std::vector<ContradictionCase>& cases, std::uint64_t seed) {
  for (auto& c : cases) c = randomize_order(std::move(c), seed);
}

// ---- run ------------------------------------------------------------------------

struct RunOptions {
  bool resume = false;
};

struct RunArtifacts {
  std::filesystem::path cases_path;
  std::filesystem::path filter_path;
  std::filesystem::path answers_path;
  std::filesystem::path metrics_path;
  std::filesystem::path manifest_path;
  nlohmann::json manifest;
  MetricsTable metrics;
  GatewayStats stats;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json stats_json(const GatewayStats& s) {
  return {{"requests", s.requests},       {"backend_calls", s.backend_calls}, {"network_calls", s.network_calls},
          {"cache_hits", s.cache_hits},   {"truncated", s.truncated},         {"failures", s.failures}};
}

// Answer rows must point at existing case rows. Returns dangling case ids.
inline std::vector<std::string> check_referential_integrity(const std::filesystem::path& cases_path,
                                                            const std::filesystem::path& answers_path) {
  std::set<std::string> ids;
  jsonl::for_each(cases_path, [&](const nlohmann::json& j, std::size_t) { ids.insert(j.at("case_id").get<std::string>()); });
  std::vector<std::string> dangling;
  jsonl::for_each(answers_path, [&](const nlohmann::json& j, std::size_t) {
    const auto id = j.at("case_id").get<std::string>();
    if (!ids.count(id)) dangling.push_back(id);
  });
  return dangling;
}

inline RunArtifacts run_pipeline(const ExperimentConfig& cfg, Gateway& gw, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  RunArtifacts art;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  art.cases_path = out / "cases.jsonl";
  art.filter_path = out / "filter_outcomes.jsonl";
  art.answers_path = out / "answers.jsonl";
  art.metrics_path = out / "metrics.csv";
  art.manifest_path = out / "manifest.json";

  if (opt.resume && fs::exists(art.manifest_path)) {
    const auto prev = nlohmann::json::parse(jsonl::read_text(art.manifest_path));
    if (prev.value("config_sha256", "") != cfg.hash()) {
      throw Error(Errc::Config, "cannot resume: config changed since the previous run in " + out.string());
    }
    spdlog::info("resuming run {} (completed stages are replayed from the response cache)", cfg.hash().substr(0, 12));
  }

  const auto stats0 = gw.stats();
  Attrition att;
  nlohmann::json stages = nlohmann::json::array();
  nlohmann::json& m = art.manifest;
  m = {{"tool", "fmtbias"},
       {"version", kToolVersion},
       {"config_sha256", cfg.hash()},
       {"config", cfg.raw},
       {"seeds", {{"build", cfg.seeds.build}, {"order", cfg.seeds.order}, {"corruption", cfg.seeds.corruption},
                  {"sampling", cfg.seeds.sampling}}},
       {"mock", cfg.mock},
       {"max_tokens", cfg.max_tokens},
       {"judge_temperature", cfg.judge_temperature},
       {"replacement_alphabet", cfg.replacement_alphabet},
       {"started_at", utc_timestamp()}};
  auto write_manifest = [&](const std::string& status) {
    const auto s = gw.stats();
    GatewayStats delta{s.requests - stats0.requests,       s.backend_calls - stats0.backend_calls,
                       s.network_calls - stats0.network_calls, s.cache_hits - stats0.cache_hits,
                       s.truncated - stats0.truncated,     s.failures - stats0.failures};
    art.stats = delta;
    att.truncated = static_cast<std::size_t>(delta.truncated);
    m["stats"] = stats_json(delta);
    m["attrition"] = to_json(att);
    m["stages_completed"] = stages;
    m["status"] = status;
    m["finished_at"] = utc_timestamp();
    jsonl::write_text(art.manifest_path, m.dump(2) + "\n");
  };

  try {
    const auto records = load_claim_records(cfg.corpus_path);
    att.records = records.size();
    stages.push_back("load");

    auto cases = stage_build(records, cfg.conditions, cfg.seeds.build);
    att.cases_built = cases.size();
    stages.push_back("build");

    std::vector<ConversionFailure> failures;
    ConversionOptions copt;
    copt.converter_model = cfg.converter_model;
    const std::size_t workers = cfg.workers ? cfg.workers : gw.default_workers();
    cases = stage_convert(gw, std::move(cases), copt, workers, failures, att);
    jsonl::write_all(out / "conversion_failures.jsonl", failures, [](const ConversionFailure& f) {
      return nlohmann::json{{"case_id", f.case_id}, {"side", std::string(1, f.side)}, {"error_code", f.error_code},
                            {"error", f.error}};
    });
    stages.push_back("convert");

    stage_corrupt(cases, cfg.seeds.corruption, cfg.replacement_alphabet, att);
    stages.push_back("corrupt");

    // filter: which cases each model is evaluated on
    std::map<std::string, std::set<std::string>> retained_for;
    std::vector<FilterOutcome> outcomes;
    auto run_filter = [&](const std::string& model) {
      FilterOptions fo;
      fo.trials = cfg.filter_trials;
      fo.workers = workers;
      auto res = filter_parametric_knowledge(cases, gw, model, fo);
      std::size_t undetermined = 0;
      for (const auto& o : res.outcomes) undetermined += o.undetermined;
      att.filter[model] = {{"evaluated", res.outcomes.size()}, {"retained", res.retained.size()},
                           {"undetermined", undetermined}};
      std::set<std::string> ids;
      for (const auto& c : res.retained) ids.insert(c.case_id);
      outcomes.insert(outcomes.end(), res.outcomes.begin(), res.outcomes.end());
      return ids;
    };
    if (cfg.filter_mode == FilterMode::PerModel) {
      for (const auto& model : cfg.models) retained_for[model] = run_filter(model);
    } else if (cfg.filter_mode == FilterMode::Reference) {
      const auto ids = run_filter(cfg.filter_model);
      for (const auto& model : cfg.models) retained_for[model] = ids;
    } else {
      std::set<std::string> all;
      for (const auto& c : cases) all.insert(c.case_id);
      for (const auto& model : cfg.models) retained_for[model] = all;
    }
    jsonl::write_all(art.filter_path, outcomes, [](const FilterOutcome& o) { return nlohmann::json(o); });
    stages.push_back("filter");

    stage_randomize(cases, cfg.seeds.order);
    jsonl::write_all(art.cases_path, cases, [](const ContradictionCase& c) { return nlohmann::json(c); });
    stages.push_back("randomize");

    std::vector<AnswerRecord> answers;
    for (const auto& model : cfg.models) {
      std::vector<ContradictionCase> subset;
      for (const auto& c : cases) {
        if (retained_for[model].count(c.case_id)) subset.push_back(c);
      }
      auto recs = elicit_answers(gw, subset, model, workers);
      answers.insert(answers.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
    att.answers_requested = answers.size();
    for (const auto& a : answers) att.answers_failed += !a.answer_text;
    stages.push_back("answer");

    JudgeOptions jo;
    jo.judge_model = cfg.judge_model;
    jo.temperature = cfg.judge_temperature;
    jo.workers = workers;
    judge_answers(gw, answers, cases, jo);
    for (const auto& a : answers) {
      if (a.verdict) {
        ++att.verdicts;
      } else if (a.answer_text) {
        ++att.verdicts_absent;
      }
    }
    jsonl::write_all(art.answers_path, answers, [](const AnswerRecord& a) { return nlohmann::json(a); });
    stages.push_back("adjudicate");

    art.metrics = aggregate(answers, cfg.group_by, cfg.binomial_method);
    jsonl::write_text(art.metrics_path, metrics_csv_string(art.metrics));
    stages.push_back("aggregate");

    const auto dangling = check_referential_integrity(art.cases_path, art.answers_path);
    if (!dangling.empty()) {
      throw Error(Errc::InvariantViolation, "answer rows reference missing cases (first: " + dangling.front() + ")");
    }
  } catch (const std::exception& e) {
    m["error"] = e.what();
    write_manifest("failed");
    throw;
  }
  write_manifest("complete");
  return art;
}

}  // namespace fmtbias
