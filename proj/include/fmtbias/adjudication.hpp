#pragma once

// Target-model answers over two conflicting sources, classified by a
// three-pass judge with majority voting.

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fmtbias/corpus.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/templates.hpp"

namespace fmtbias {

inline constexpr int kJudgePasses = 3;

enum class JudgeLabel { One, Two, Three, No };

inline std::string_view to_string(JudgeLabel l) noexcept {
  switch (l) {
    case JudgeLabel::One: return "1";
    case JudgeLabel::Two: return "2";
    case JudgeLabel::Three: return "3";
    case JudgeLabel::No: return "No";
  }
  return "No";
}

enum class VerdictKind { PrefA, PrefB, Both, Neither, Unresolved };

inline std::string_view to_string(VerdictKind v) noexcept {
  switch (v) {
    case VerdictKind::PrefA: return "PrefA";
    case VerdictKind::PrefB: return "PrefB";
    case VerdictKind::Both: return "Both";
    case VerdictKind::Neither: return "Neither";
    case VerdictKind::Unresolved: return "Unresolved";
  }
  return "Unresolved";
}

inline VerdictKind parse_verdict_kind(std::string_view s) {
  for (auto v : {VerdictKind::PrefA, VerdictKind::PrefB, VerdictKind::Both, VerdictKind::Neither,
                 VerdictKind::Unresolved}) {
    if (s == to_string(v)) return v;
  }
  throw Error(Errc::Schema, "unknown verdict '" + std::string(s) + "'");
}

struct Verdict {
  VerdictKind kind = VerdictKind::Unresolved;
  std::vector<JudgeLabel> passes;  // parseable passes only
  int agreement = 0;
  bool operator==(const Verdict&) const = default;
};

// First standalone token among {1, 2, 3, No}, case-insensitive. Tokens are
// maximal runs of alphanumerics, so "12" or "Nope" do not count.
inline JudgeLabel parse_judge_label(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    const std::string_view tok = text.substr(start, i - start);
    if (tok == "1") return JudgeLabel::One;
    if (tok == "2") return JudgeLabel::Two;
    if (tok == "3") return JudgeLabel::Three;
    if (text::iequals(tok, "no")) return JudgeLabel::No;
  }
  throw Error(Errc::UnparseableJudgeOutput, "no judge label in '" + std::string(text.substr(0, 80)) + "'");
}

inline std::optional<JudgeLabel> try_parse_judge_label(std::string_view text) {
  try {
    return parse_judge_label(text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline VerdictKind verdict_for(JudgeLabel l) noexcept {
  switch (l) {
    case JudgeLabel::One: return VerdictKind::PrefA;
    case JudgeLabel::Two: return VerdictKind::Both;
    case JudgeLabel::Three: return VerdictKind::PrefB;
    case JudgeLabel::No: return VerdictKind::Neither;
  }
  return VerdictKind::Unresolved;
}

// A label needs at least two votes; absent passes simply do not vote.
inline Verdict majority_verdict(const std::vector<JudgeLabel>& passes) {
  Verdict v;
  v.passes = passes;
  std::array<int, 4> counts{};
  for (auto l : passes) ++counts[static_cast<std::size_t>(l)];
  int best = 0;
  std::size_t best_label = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > best) {
      best = counts[i];
      best_label = i;
    }
  }
  v.agreement = best;
  v.kind = best >= 2 ? verdict_for(static_cast<JudgeLabel>(best_label)) : VerdictKind::Unresolved;
  return v;
}

// ---- prompts ------------------------------------------------------------------

inline std::string build_answer_prompt(const ContradictionCase& c) {
  if (c.evidence_a.body.empty() || c.evidence_b.body.empty()) {
    throw Error(Errc::MissingPayload, "case '" + c.case_id + "' lacks an evidence body");
  }
  const bool ab = c.presented_order == PresentedOrder::AB;
  const std::string& first = ab ? c.evidence_a.body : c.evidence_b.body;
  const std::string& second = ab ? c.evidence_b.body : c.evidence_a.body;
  const std::string full_reference = "Source A:\n" + first + "\n\nSource B:\n" + second;
  return templates::render(templates::kAnswerTemplate, {{"full_reference", full_reference}, {"question", c.question}});
}

// Claim A / Claim B follow semantic source identity, never presentation slot.
inline std::string build_judge_prompt(const std::string& question, const std::string& answer,
                                      const std::string& claim_a, const std::string& claim_b) {
  return templates::render(templates::kJudgeTemplate, {{"question", question},
                                                       {"answer", answer},
                                                       {"claim_shared", claim_a},
                                                       {"claim_specific", claim_b}});
}

// ---- records ------------------------------------------------------------------

struct AnswerRecord {
  std::string case_id;
  std::string model_id;
  std::optional<std::string> answer_text;
  std::optional<Verdict> verdict;
  std::string judge_model;
  // denormalized grouping tags
  std::string format_pair;
  std::string condition;
  std::string domain_tag;
  std::string error;
  bool operator==(const AnswerRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const AnswerRecord& r) {
  j = {{"case_id", r.case_id},
       {"model_id", r.model_id},
       {"answer_text", r.answer_text ? nlohmann::json(*r.answer_text) : nlohmann::json()},
       {"judge_model", r.judge_model},
       {"format_pair", r.format_pair},
       {"condition", r.condition},
       {"domain_tag", r.domain_tag}};
  if (r.verdict) {
    nlohmann::json passes = nlohmann::json::array();
    for (auto l : r.verdict->passes) passes.push_back(to_string(l));
    j["passes"] = passes;
    j["verdict"] = to_string(r.verdict->kind);
    j["agreement"] = r.verdict->agreement;
  } else {
    j["passes"] = nlohmann::json::array();
    j["verdict"] = nullptr;
    j["agreement"] = 0;
  }
  if (!r.error.empty()) j["error"] = r.error;
}

inline void from_json(const nlohmann::json& j, AnswerRecord& r) {
  r.case_id = j.at("case_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.answer_text = j.contains("answer_text") && !j["answer_text"].is_null()
                      ? std::optional<std::string>(j["answer_text"].get<std::string>())
                      : std::nullopt;
  r.judge_model = j.value("judge_model", "");
  r.format_pair = j.value("format_pair", "");
  r.condition = j.value("condition", "");
  r.domain_tag = j.value("domain_tag", "");
  r.error = j.value("error", "");
  r.verdict.reset();
  if (j.contains("verdict") && !j["verdict"].is_null()) {
    Verdict v;
    v.kind = parse_verdict_kind(j["verdict"].get<std::string>());
    for (const auto& p : j.value("passes", nlohmann::json::array())) v.passes.push_back(parse_judge_label(p.get<std::string>()));
    v.agreement = j.value("agreement", 0);
    r.verdict = v;
  }
}

// ---- elicitation and judging ------------------------------------------------------

inline CompletionRequest build_answer_request(const ContradictionCase& c, const std::string& model_id) {
  return make_request(model_id, build_answer_prompt(c), c.case_id + ".answer", Purpose::Evaluation);
}

inline AnswerRecord answer_stub(const ContradictionCase& c, const std::string& model_id) {
  AnswerRecord r;
  r.case_id = c.case_id;
  r.model_id = model_id;
  r.format_pair = format_pair_label(c.evidence_a.kind, c.evidence_b.kind);
  r.condition = c.condition;
  r.domain_tag = c.domain_tag;
  return r;
}

// Answers for every case, positionally aligned. Failures leave answer_text empty.
inline std::vector<AnswerRecord> elicit_answers(Gateway& gw, const std::vector<ContradictionCase>& cases,
                                                const std::string& model_id, std::size_t workers = 0) {
  std::vector<AnswerRecord> out;
  std::vector<CompletionRequest> reqs;
  std::vector<std::size_t> slot;
  for (const auto& c : cases) {
    out.push_back(answer_stub(c, model_id));
    try {
      reqs.push_back(build_answer_request(c, model_id));
      slot.push_back(out.size() - 1);
    } catch (const Error& e) {
      out.back().error = e.what();
    }
  }
  const auto results = gw.complete_batch(reqs, workers);
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& rec = out[slot[i]];
    if (results[i].ok()) {
      rec.answer_text = results[i].completion->text;
    } else {
      rec.error = results[i].error;
      spdlog::warn("answer for {} / {} failed: {}", rec.case_id, model_id, rec.error);
    }
  }
  return out;
}

struct JudgeInput {
  std::string tag;  // usually the case id
  std::string question;
  std::string answer;
  std::string claim_a;
  std::string claim_b;
};

struct JudgeOptions {
  std::string judge_model = "gpt-4o-mini";
  double temperature = 0.0;
  std::size_t workers = 0;
};

struct JudgeOutcome {
  std::optional<Verdict> verdict;
  int calls = 0;
  std::string error;
};

// Three passes per input, each its own request (tag "<tag>.judge.<i>", cache
// salted by pass index). Unparseable passes get one retry, then drop out.
inline std::vector<JudgeOutcome> adjudicate_batch(Gateway& gw, const std::vector<JudgeInput>& inputs,
                                                  const JudgeOptions& opt = {}) {
  std::vector<JudgeOutcome> out(inputs.size());
  std::vector<std::string> prompts;
  prompts.reserve(inputs.size());
  for (const auto& in : inputs) prompts.push_back(build_judge_prompt(in.question, in.answer, in.claim_a, in.claim_b));

  auto request = [&](std::size_t i, int pass, bool retry) {
    std::string salt = "judge-pass:" + std::to_string(pass) + (retry ? ":retry" : "");
    return make_request(opt.judge_model, prompts[i], inputs[i].tag + ".judge." + std::to_string(pass), Purpose::Judge,
                        opt.temperature, std::move(salt));
  };

  std::vector<CompletionRequest> reqs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (int p = 0; p < kJudgePasses; ++p) reqs.push_back(request(i, p, false));
  }
  const auto first = gw.complete_batch(reqs, opt.workers);

  std::vector<std::array<std::optional<JudgeLabel>, kJudgePasses>> labels(inputs.size());
  std::vector<bool> failed(inputs.size(), false);
  std::vector<std::pair<std::size_t, int>> retry_slots;
  std::vector<CompletionRequest> retries;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (int p = 0; p < kJudgePasses; ++p) {
      const auto& r = first[i * kJudgePasses + static_cast<std::size_t>(p)];
      ++out[i].calls;
      if (!r.ok()) {
        failed[i] = true;
        out[i].error = r.error;
        continue;
      }
      labels[i][static_cast<std::size_t>(p)] = try_parse_judge_label(r.completion->text);
      if (!labels[i][static_cast<std::size_t>(p)]) {
        retry_slots.emplace_back(i, p);
        retries.push_back(request(i, p, true));
      }
    }
  }
  const auto second = gw.complete_batch(retries, opt.workers);
  for (std::size_t k = 0; k < second.size(); ++k) {
    const auto [i, p] = retry_slots[k];
    ++out[i].calls;
    if (!second[k].ok()) {
      failed[i] = true;
      out[i].error = second[k].error;
      continue;
    }
    labels[i][static_cast<std::size_t>(p)] = try_parse_judge_label(second[k].completion->text);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (failed[i]) {
      spdlog::warn("judge failed for {}: {}", inputs[i].tag, out[i].error);
      continue;
    }
    std::vector<JudgeLabel> valid;
    for (const auto& l : labels[i]) {
      if (l) valid.push_back(*l);
    }
    out[i].verdict = majority_verdict(valid);
  }
  return out;
}

inline JudgeOutcome adjudicate(Gateway& gw, const JudgeInput& input, const JudgeOptions& opt = {}) {
  return adjudicate_batch(gw, {input}, opt).front();
}

// Fills verdicts for records that have an answer; records without one are skipped.
inline void judge_answers(Gateway& gw, std::vector<AnswerRecord>& records,
                          const std::vector<ContradictionCase>& cases, const JudgeOptions& opt = {}) {
  std::map<std::string, const ContradictionCase*> by_id;
  for (const auto& c : cases) by_id[c.case_id] = &c;
  std::vector<JudgeInput> inputs;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (!r.answer_text) continue;
    auto it = by_id.find(r.case_id);
    if (it == by_id.end()) throw Error(Errc::Schema, "answer references unknown case '" + r.case_id + "'");
    const auto& c = *it->second;
    inputs.push_back({r.case_id, c.question, *r.answer_text, c.claim_a, c.claim_b});
    idx.push_back(i);
  }
  const auto outcomes = adjudicate_batch(gw, inputs, opt);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    auto& r = records[idx[k]];
    r.judge_model = opt.judge_model;
    r.verdict = outcomes[k].verdict;
    if (!r.verdict) r.error = outcomes[k].error;
  }
}

}  // namespace fmtbias
