#pragma once

// Claim records in, contradiction cases out: pairing, format assignment,
// the 16-trial parametric-knowledge filter and seeded order randomization.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmtbias/error.hpp"
#include "fmtbias/format_kind.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/hashing.hpp"
#include "fmtbias/jsonl.hpp"
#include "fmtbias/templates.hpp"
#include "fmtbias/text_util.hpp"

namespace fmtbias {

inline constexpr int kFilterTrials = 16;
inline constexpr std::size_t kCounterclaimsPerRecord = 3;

struct Counterclaim {
  std::string claim;
  std::string evidence;
  bool operator==(const Counterclaim&) const = default;
};

struct ClaimRecord {
  std::string id;
  std::string subject;
  std::string relation;
  std::string question;
  std::string fact_claim;
  std::string fact_evidence;
  std::optional<std::string> fact_object;
  std::vector<Counterclaim> counterclaims;
  std::optional<std::string> domain_tag;
  bool operator==(const ClaimRecord&) const = default;
};

struct EvidencePayload {
  FormatKind kind = FormatKind::Text;
  std::string body;         // what the model sees
  std::string source_text;  // plain-text evidence the body was derived from
  std::optional<std::size_t> target_entries;  // requested entry count (richness)
  std::optional<std::size_t> entry_count;     // counted on the accepted body
  double corruption_p = 0.0;
  nlohmann::json corruption;  // seed, alphabet, tokens_replaced/total; null if untouched
  bool converted = false;
  bool operator==(const EvidencePayload&) const = default;
};

enum class PresentedOrder { AB, BA };

inline std::string_view to_string(PresentedOrder o) noexcept { return o == PresentedOrder::AB ? "AB" : "BA"; }

struct ContradictionCase {
  std::string case_id;
  std::string record_id;
  int counter_index = 0;
  std::string condition;
  std::string domain_tag;
  std::string question;
  std::string claim_a;
  std::string claim_b;
  char fact_side = 'A';  // which semantic source carries the factual claim
  std::optional<std::string> fact_object;
  EvidencePayload evidence_a;
  EvidencePayload evidence_b;
  std::uint64_t build_seed = 0;
  std::uint64_t order_seed = 0;
  PresentedOrder presented_order = PresentedOrder::AB;
  bool operator==(const ContradictionCase&) const = default;

  const std::string& fact_claim() const { return fact_side == 'A' ? claim_a : claim_b; }
};

struct FilterOutcome {
  std::string case_id;
  std::string model_id;
  int trials = kFilterTrials;
  int successes = 0;
  bool retained = false;
  bool undetermined = false;
  bool operator==(const FilterOutcome&) const = default;
};

// How formats are put on the two payloads of each case.
struct FormatAssignmentPolicy {
  std::string condition = "default";
  bool random_pair = false;  // draw a distinct ordered pair from the four formats
  FormatKind format_a = FormatKind::Text;
  FormatKind format_b = FormatKind::Text;
  std::optional<std::size_t> entries_a;
  std::optional<std::size_t> entries_b;
  double p_a = 0.0;
  double p_b = 0.0;
};

// ---- JSON -----------------------------------------------------------------

namespace detail {

template <typename T>
void put_opt(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_opt(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const Counterclaim& c) {
  j = {{"claim", c.claim}, {"evidence", c.evidence}};
}

inline void from_json(const nlohmann::json& j, Counterclaim& c) {
  c.claim = j.at("claim").get<std::string>();
  c.evidence = j.at("evidence").get<std::string>();
}

inline void to_json(nlohmann::json& j, const ClaimRecord& r) {
  j = {{"id", r.id},
       {"subject", r.subject},
       {"relation", r.relation},
       {"question", r.question},
       {"fact_claim", r.fact_claim},
       {"fact_evidence", r.fact_evidence},
       {"counterclaims", r.counterclaims}};
  detail::put_opt(j, "fact_object", r.fact_object);
  detail::put_opt(j, "domain_tag", r.domain_tag);
}

// Throws Errc::Schema naming the offending field.
inline void from_json(const nlohmann::json& j, ClaimRecord& r) {
  if (!j.is_object()) throw Error(Errc::Schema, "record is not a JSON object");
  auto str = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw Error(Errc::Schema, std::string("missing field '") + key + "'");
    if (!it->is_string()) throw Error(Errc::Schema, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  r.id = str("id");
  r.subject = str("subject");
  r.relation = str("relation");
  r.question = str("question");
  r.fact_claim = str("fact_claim");
  r.fact_evidence = str("fact_evidence");
  auto cc = j.find("counterclaims");
  if (cc == j.end() || !cc->is_array()) throw Error(Errc::Schema, "missing array field 'counterclaims'");
  if (cc->size() != kCounterclaimsPerRecord) {
    throw Error(Errc::Schema, "expected 3 counterclaims, found " + std::to_string(cc->size()));
  }
  r.counterclaims.clear();
  for (const auto& c : *cc) {
    if (!c.is_object() || !c.contains("claim") || !c.contains("evidence")) {
      throw Error(Errc::Schema, "counterclaim needs 'claim' and 'evidence'");
    }
    r.counterclaims.push_back(c.get<Counterclaim>());
    if (r.counterclaims.back().claim == r.fact_claim) {
      throw Error(Errc::Schema, "counterclaim repeats the factual claim");
    }
  }
  r.fact_object = detail::get_opt<std::string>(j, "fact_object");
  r.domain_tag = detail::get_opt<std::string>(j, "domain_tag");
}

inline void to_json(nlohmann::json& j, const EvidencePayload& p) {
  j = {{"kind", to_string(p.kind)},
       {"body", p.body},
       {"source_text", p.source_text},
       {"corruption_p", p.corruption_p},
       {"converted", p.converted}};
  detail::put_opt(j, "target_entries", p.target_entries);
  detail::put_opt(j, "entry_count", p.entry_count);
  if (!p.corruption.is_null()) j["corruption"] = p.corruption;
}

inline void from_json(const nlohmann::json& j, EvidencePayload& p) {
  p.kind = parse_format_kind(j.at("kind").get<std::string>());
  p.body = j.at("body").get<std::string>();
  p.source_text = j.value("source_text", "");
  p.corruption_p = j.value("corruption_p", 0.0);
  p.converted = j.value("converted", false);
  p.target_entries = detail::get_opt<std::size_t>(j, "target_entries");
  p.entry_count = detail::get_opt<std::size_t>(j, "entry_count");
  p.corruption = j.contains("corruption") ? j.at("corruption") : nlohmann::json();
}

inline void to_json(nlohmann::json& j, const ContradictionCase& c) {
  j = {{"case_id", c.case_id},
       {"record_id", c.record_id},
       {"counter_index", c.counter_index},
       {"condition", c.condition},
       {"domain_tag", c.domain_tag},
       {"question", c.question},
       {"claim_a", c.claim_a},
       {"claim_b", c.claim_b},
       {"fact_side", std::string(1, c.fact_side)},
       {"evidence_a", c.evidence_a},
       {"evidence_b", c.evidence_b},
       {"build_seed", c.build_seed},
       {"order_seed", c.order_seed},
       {"presented_order", to_string(c.presented_order)}};
  detail::put_opt(j, "fact_object", c.fact_object);
}

inline void from_json(const nlohmann::json& j, ContradictionCase& c) {
  c.case_id = j.at("case_id").get<std::string>();
  c.record_id = j.value("record_id", "");
  c.counter_index = j.value("counter_index", 0);
  c.condition = j.value("condition", "");
  c.domain_tag = j.value("domain_tag", "");
  c.question = j.at("question").get<std::string>();
  c.claim_a = j.at("claim_a").get<std::string>();
  c.claim_b = j.at("claim_b").get<std::string>();
  const std::string side = j.value("fact_side", "A");
  c.fact_side = side == "B" ? 'B' : 'A';
  c.fact_object = detail::get_opt<std::string>(j, "fact_object");
  c.evidence_a = j.at("evidence_a").get<EvidencePayload>();
  c.evidence_b = j.at("evidence_b").get<EvidencePayload>();
  c.build_seed = j.value("build_seed", std::uint64_t{0});
  c.order_seed = j.value("order_seed", std::uint64_t{0});
  c.presented_order = j.value("presented_order", "AB") == "BA" ? PresentedOrder::BA : PresentedOrder::AB;
}

inline void to_json(nlohmann::json& j, const FilterOutcome& f) {
  j = {{"case_id", f.case_id},   {"model_id", f.model_id},   {"trials", f.trials},
       {"successes", f.successes}, {"retained", f.retained}, {"undetermined", f.undetermined}};
}

inline void from_json(const nlohmann::json& j, FilterOutcome& f) {
  f.case_id = j.at("case_id").get<std::string>();
  f.model_id = j.value("model_id", "");
  f.trials = j.value("trials", kFilterTrials);
  f.successes = j.at("successes").get<int>();
  f.retained = j.at("retained").get<bool>();
  f.undetermined = j.value("undetermined", false);
}

// ---- loading ----------------------------------------------------------------

struct LoadDiagnostic {
  std::size_t line = 0;
  std::string message;
};

// strict: the first bad line throws Error(Schema, position = line number).
// Otherwise bad lines are skipped and reported through `diagnostics`.
inline std::vector<ClaimRecord> load_claim_records(const std::filesystem::path& path, bool strict = true,
                                                   std::vector<LoadDiagnostic>* diagnostics = nullptr) {
  std::vector<ClaimRecord> out;
  auto report = [&](std::size_t line, const std::string& msg) {
    if (strict) throw Error(Errc::Schema, path.filename().string() + ":" + std::to_string(line) + ": " + msg, line);
    if (diagnostics) diagnostics->push_back({line, msg});
  };
  jsonl::for_each(
      path,
      [&](const nlohmann::json& j, std::size_t line) {
        try {
          out.push_back(j.get<ClaimRecord>());
        } catch (const Error& e) {
          report(line, e.what());
        } catch (const nlohmann::json::exception& e) {
          report(line, e.what());
        }
      },
      [&](const jsonl::LineError& e) { report(e.line, e.message); });
  return out;
}

// ---- case construction ------------------------------------------------------

inline std::string make_case_id(const std::string& record_id, int counter_index, const std::string& condition) {
  return record_id + "#" + std::to_string(counter_index) + "@" + condition;
}

inline EvidencePayload make_payload(FormatKind kind, const std::string& evidence,
                                    std::optional<std::size_t> entries, double p) {
  EvidencePayload e;
  e.kind = kind;
  e.source_text = evidence;
  if (kind == FormatKind::Text) {
    e.body = evidence;  // nothing to convert or corrupt
  } else {
    e.target_entries = entries;
    e.corruption_p = p;
  }
  return e;
}

// Three cases per record (fact vs each counterclaim). Which of the two claims
// becomes semantic source A is a seeded coin per case, so format never lines
// up with truth value.
inline std::vector<ContradictionCase> build_contradiction_cases(const std::vector<ClaimRecord>& records,
                                                                const FormatAssignmentPolicy& policy,
                                                                std::uint64_t seed) {
  std::vector<ContradictionCase> out;
  out.reserve(records.size() * kCounterclaimsPerRecord);
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.counterclaims.size(); ++i) {
      ContradictionCase c;
      c.record_id = rec.id;
      c.counter_index = static_cast<int>(i);
      c.condition = policy.condition;
      c.case_id = make_case_id(rec.id, c.counter_index, policy.condition);
      c.domain_tag = rec.domain_tag.value_or("");
      c.question = rec.question;
      c.fact_object = rec.fact_object;
      c.build_seed = seed;

      const std::uint64_t h = hash_combine(seed, c.case_id);
      FormatKind fa = policy.format_a;
      FormatKind fb = policy.format_b;
      if (policy.random_pair) {
        const std::uint64_t r = splitmix64(h ^ 0xa0761d6478bd642fULL);
        fa = kAllFormats[r % 4];
        fb = kAllFormats[(r % 4 + 1 + (r >> 8) % 3) % 4];
      }
      c.fact_side = unit_double(splitmix64(h)) < 0.5 ? 'A' : 'B';
      const auto& cc = rec.counterclaims[i];
      const bool fact_is_a = c.fact_side == 'A';
      c.claim_a = fact_is_a ? rec.fact_claim : cc.claim;
      c.claim_b = fact_is_a ? cc.claim : rec.fact_claim;
      c.evidence_a = make_payload(fa, fact_is_a ? rec.fact_evidence : cc.evidence, policy.entries_a, policy.p_a);
      c.evidence_b = make_payload(fb, fact_is_a ? cc.evidence : rec.fact_evidence, policy.entries_b, policy.p_b);
      out.push_back(std::move(c));
    }
  }
  return out;
}

// Presentation order is a fair coin on hash(seed, case_id). Semantic labels
// (claim_a/evidence_a) are never touched.
inline ContradictionCase randomize_order(ContradictionCase c, std::uint64_t seed) {
  c.order_seed = seed;
  c.presented_order =
      unit_double(hash_combine(seed, c.case_id)) < 0.5 ? PresentedOrder::AB : PresentedOrder::BA;
  return c;
}

// ---- parametric-knowledge filter --------------------------------------------

inline std::string build_filter_prompt(const std::string& question) {
  return std::string(templates::kFilterInstruction) + "\n\nQuestion: " + question;
}

// An answer "reproduces" the fact if the normalized fact object occurs in it
// as whole words; without an object, if the answer is a word span of the
// normalized factual claim.
inline bool answer_matches_fact(const std::string& answer, const ContradictionCase& c) {
  const std::string a = text::normalize_for_match(answer);
  if (c.fact_object) return text::contains_words(a, text::normalize_for_match(*c.fact_object));
  return text::contains_words(text::normalize_for_match(c.fact_claim()), a);
}

struct FilterOptions {
  int trials = kFilterTrials;
  std::size_t workers = 0;
};

struct FilterResult {
  std::vector<ContradictionCase> retained;
  std::vector<FilterOutcome> outcomes;
};

// Queries each distinct (question, fact) once per trial; the three cases of a
// record share those answers. A case is retained iff zero trials match.
inline FilterResult filter_parametric_knowledge(const std::vector<ContradictionCase>& cases, Gateway& gateway,
                                                const std::string& model_id, const FilterOptions& opt = {}) {
  std::map<std::string, std::size_t> group_of;  // question -> group
  std::vector<std::size_t> case_group(cases.size());
  std::vector<std::string> questions;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto [it, fresh] = group_of.emplace(cases[i].question, questions.size());
    if (fresh) questions.push_back(cases[i].question);
    case_group[i] = it->second;
  }
  std::vector<CompletionRequest> reqs;
  reqs.reserve(questions.size() * static_cast<std::size_t>(opt.trials));
  for (const auto& q : questions) {
    const std::string prompt = build_filter_prompt(q);
    for (int t = 0; t < opt.trials; ++t) {
      reqs.push_back(make_request(model_id, prompt, "filter." + short_hash(q) + "." + std::to_string(t),
                                  Purpose::Filter, 0.0, "filter-trial:" + std::to_string(t)));
    }
  }
  const auto results = gateway.complete_batch(reqs, opt.workers);

  FilterResult out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    FilterOutcome o;
    o.case_id = cases[i].case_id;
    o.model_id = model_id;
    o.trials = opt.trials;
    const std::size_t base = case_group[i] * static_cast<std::size_t>(opt.trials);
    for (int t = 0; t < opt.trials; ++t) {
      const auto& r = results[base + static_cast<std::size_t>(t)];
      if (!r.ok()) {
        o.undetermined = true;
        continue;
      }
      if (answer_matches_fact(r.completion->text, cases[i])) ++o.successes;
    }
    o.retained = !o.undetermined && o.successes == 0;
    if (o.undetermined) spdlog::warn("filter: case {} undetermined (gateway failure), excluded", o.case_id);
    if (o.retained) out.retained.push_back(cases[i]);
    out.outcomes.push_back(std::move(o));
  }
  return out;
}

}  // namespace fmtbias
