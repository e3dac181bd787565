#pragma once

// Text -> table / KG / infobox conversion through a converter model, with
// mechanical syntax and entry-count checks, plus the annotation sampling
// tooling used to audit conversions by hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fmtbias/csv.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/format_kind.hpp"
#include "fmtbias/formats.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/hashing.hpp"
#include "fmtbias/templates.hpp"

namespace fmtbias {

struct ConversionJob {
  std::string id;
  std::string claim_text;
  std::string evidence_text;
  FormatKind target = FormatKind::Table;
  std::optional<std::size_t> entry_count;
};

inline std::string_view conversion_template(FormatKind target, bool constrained) {
  switch (target) {
    case FormatKind::Table: return constrained ? templates::kTableConstrained : templates::kTableFree;
    case FormatKind::KG: return constrained ? templates::kKgConstrained : templates::kKgFree;
    case FormatKind::Infobox: return constrained ? templates::kInfoboxConstrained : templates::kInfoboxFree;
    case FormatKind::Text: break;
  }
  throw Error(Errc::InvalidArgument, "plain text is not a conversion target");
}

inline std::string build_conversion_prompt(const ConversionJob& job) {
  if (job.target == FormatKind::Text) {
    throw Error(Errc::InvalidArgument, "plain text is not a conversion target");
  }
  if (job.entry_count && *job.entry_count == 0) {
    throw Error(Errc::InvalidArgument, "entry_count must be positive");
  }
  templates::Values v{{"claim_text", job.claim_text}, {"evidence_text", job.evidence_text}};
  if (job.entry_count) v["nums"] = std::to_string(*job.entry_count);
  return templates::render(conversion_template(job.target, job.entry_count.has_value()), v);
}

struct ConversionOptions {
  std::string converter_model = "gpt-4o-mini";
  int max_requests = 2;  // initial request + one re-request
  double temperature = 0.0;
};

struct ConversionCheck {
  bool syntax_ok = false;
  std::optional<std::size_t> entries;
  std::string problem;
};

inline ConversionCheck check_conversion(FormatKind target, std::string_view output,
                                        std::optional<std::size_t> want) {
  ConversionCheck chk;
  const auto report = validate(target, output);
  if (!report.valid) {
    chk.problem = std::string(errc_name(report.issues.front().code)) + ": " + report.issues.front().description;
    return chk;
  }
  chk.syntax_ok = true;
  chk.entries = count_entries(parse(target, output));
  if (want && *chk.entries != *want) {
    chk.problem = "expected " + std::to_string(*want) + " entries, got " + std::to_string(*chk.entries);
  }
  return chk;
}

struct ConvertedBody {
  std::string body;
  std::size_t entry_count = 0;
  int requests = 0;
};

// Throws ConversionInvalid (last output failed syntax) or EntryCountMismatch
// (last output parsed with the wrong count) once the request budget is spent.
inline ConvertedBody convert(Gateway& gateway, const ConversionJob& job, const ConversionOptions& opt = {}) {
  const std::string prompt = build_conversion_prompt(job);
  Errc last_code = Errc::ConversionInvalid;
  std::string last_problem;
  for (int attempt = 0; attempt < std::max(opt.max_requests, 1); ++attempt) {
    auto req = make_request(opt.converter_model, prompt, job.id + ".convert." + std::to_string(attempt),
                            Purpose::Conversion, opt.temperature, "convert-attempt:" + std::to_string(attempt));
    const Completion c = gateway.complete(req);
    std::string body = strip_fences(c.text);
    const auto chk = check_conversion(job.target, body, job.entry_count);
    if (chk.syntax_ok && chk.problem.empty()) return {std::move(body), *chk.entries, attempt + 1};
    last_code = chk.syntax_ok ? Errc::EntryCountMismatch : Errc::ConversionInvalid;
    last_problem = chk.problem;
  }
  throw Error(last_code, "conversion '" + job.id + "' rejected: " + last_problem);
}

// ---- verification sampling --------------------------------------------------

struct SampleInput {
  std::string id;
  FormatKind target = FormatKind::Table;
  std::string output;
};

struct VerificationSample {
  std::string id;
  FormatKind target = FormatKind::Table;
  std::string output;
  bool syntax_ok = false;
  std::optional<bool> factual_ok;  // human annotation
  bool operator==(const VerificationSample&) const = default;
};

// Uniform sample of round(fraction * N) payloads. Membership and order depend
// only on (seed, id), so shuffling the input does not change the sample.
inline std::vector<VerificationSample> draw_verification_sample(const std::vector<SampleInput>& payloads,
                                                                double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "sampling fraction must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(payloads.size())));
  std::vector<std::pair<std::uint64_t, const SampleInput*>> keyed;
  keyed.reserve(payloads.size());
  for (const auto& p : payloads) keyed.emplace_back(hash_combine(seed, p.id), &p);
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
  });
  std::vector<VerificationSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n && i < keyed.size(); ++i) {
    const auto& p = *keyed[i].second;
    out.push_back({p.id, p.target, p.output, validate(p.target, p.output).valid, std::nullopt});
  }
  return out;
}

inline void export_verification_csv(std::ostream& os, const std::vector<VerificationSample>& samples) {
  csv::write_row(os, {"id", "target", "output", "syntax_ok", "factual_ok"});
  for (const auto& s : samples) {
    csv::write_row(os, {s.id, std::string(to_string(s.target)), s.output, s.syntax_ok ? "true" : "false",
                        s.factual_ok ? (*s.factual_ok ? "true" : "false") : ""});
  }
}

inline std::optional<bool> parse_annotation(std::string_view v) {
  const std::string s = text::to_lower(text::trim(v));
  if (s.empty()) return std::nullopt;
  if (s == "true" || s == "1" || s == "yes" || s == "y") return true;
  if (s == "false" || s == "0" || s == "no" || s == "n") return false;
  throw Error(Errc::Schema, "unrecognized annotation '" + std::string(v) + "'");
}

inline std::vector<VerificationSample> import_verification_csv(std::istream& is) {
  const auto rows = csv::read(is);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  auto col = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(Errc::Schema, std::string("verification CSV lacks column '") + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col("id"), c_target = col("target"), c_out = col("output"), c_syn = col("syntax_ok"),
                    c_fact = col("factual_ok");
  std::vector<VerificationSample> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw Error(Errc::Schema, "verification CSV row " + std::to_string(r + 1) + " has wrong arity", r + 1);
    }
    out.push_back({row[c_id], parse_format_kind(row[c_target]), row[c_out], row[c_syn] == "true",
                   parse_annotation(row[c_fact])});
  }
  return out;
}

struct VerificationSummary {
  std::size_t sampled = 0;
  std::size_t annotated = 0;
  std::size_t factual = 0;
  std::size_t syntax_valid = 0;
  double factual_rate = 0.0;  // factual / annotated
  double syntax_rate = 0.0;   // syntax_valid / sampled
};

inline VerificationSummary summarize_verification(const std::vector<VerificationSample>& samples) {
  VerificationSummary s;
  s.sampled = samples.size();
  for (const auto& v : samples) {
    if (v.syntax_ok) ++s.syntax_valid;
    if (v.factual_ok) {
      ++s.annotated;
      if (*v.factual_ok) ++s.factual;
    }
  }
  if (s.annotated) s.factual_rate = static_cast<double>(s.factual) / static_cast<double>(s.annotated);
  if (s.sampled) s.syntax_rate = static_cast<double>(s.syntax_valid) / static_cast<double>(s.sampled);
  return s;
}

}  // namespace fmtbias
