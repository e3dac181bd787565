#pragma once

// Scripted replies for offline runs. A script is a list of rules matched in
// order against (model, prompt kind, prompt substrings); the reply is a pure
// function of the request. Unmatched conversion prompts get a synthesized
// valid document with the requested entry count, unmatched filter prompts a
// fixed non-answer; anything else is a terminal error.

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmtbias/error.hpp"
#include "fmtbias/formats.hpp"
#include "fmtbias/gateway.hpp"
#include "fmtbias/jsonl.hpp"
#include "fmtbias/templates.hpp"
#include "fmtbias/text_util.hpp"

namespace fmtbias {

enum class PromptKind { Conversion, Filter, Answer, Judge, Other };

inline std::string_view to_string(PromptKind k) noexcept {
  switch (k) {
    case PromptKind::Conversion: return "conversion";
    case PromptKind::Filter: return "filter";
    case PromptKind::Answer: return "answer";
    case PromptKind::Judge: return "judge";
    case PromptKind::Other: return "other";
  }
  return "other";
}

inline std::optional<PromptKind> parse_prompt_kind(std::string_view s) {
  for (auto k : {PromptKind::Conversion, PromptKind::Filter, PromptKind::Answer, PromptKind::Judge, PromptKind::Other}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline PromptKind classify_prompt(std::string_view p) {
  auto starts = [&](std::string_view s) { return p.substr(0, s.size()) == s; };
  if (starts("## ROLE & GOAL")) return PromptKind::Conversion;
  if (starts(templates::kFilterInstruction)) return PromptKind::Filter;
  if (starts("Based on the two reference sources")) return PromptKind::Answer;
  if (starts("Question:\n") && p.find("Scoring Guidelines:") != std::string_view::npos) return PromptKind::Judge;
  return PromptKind::Other;
}

inline std::string last_user_content(const CompletionRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return {};
}

struct MockRule {
  std::string model = "*";
  std::optional<PromptKind> kind;
  std::vector<std::string> contains;
  std::string reply;
  int status = 200;
  std::string finish_reason = "stop";
};

namespace detail {

inline std::string sanitize_cell(std::string s) {
  for (char& c : s) {
    if (c == '|' || c == '!' || c == '=' || c == '{' || c == '}' || c == '(' || c == ')' || c == ',' || c == '\n' ||
        c == '\r') {
      c = ' ';
    }
  }
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out.empty() ? "n/a" : out;
}

inline std::string section_after(const std::string& prompt, const std::string& marker) {
  auto at = prompt.rfind(marker);
  if (at == std::string::npos) return {};
  at += marker.size();
  auto end = prompt.find("\n\n[", at);
  return std::string(text::trim(std::string_view(prompt).substr(at, end == std::string::npos ? end : end - at)));
}

}  // namespace detail

// A valid document of the conversion prompt's target kind with the requested
// number of entries (4 when unconstrained). Content is derived from the claim.
inline std::optional<std::string> synthesize_conversion(const std::string& prompt) {
  FormatKind kind;
  if (prompt.find("[Output MediaWiki Table") != std::string::npos) {
    kind = FormatKind::Table;
  } else if (prompt.find("[Output Triplets") != std::string::npos) {
    kind = FormatKind::KG;
  } else if (prompt.find("[Output Infobox") != std::string::npos) {
    kind = FormatKind::Infobox;
  } else {
    return std::nullopt;
  }
  std::size_t n = 4;
  static const std::regex kNums(R"(\[Output [^\]]*Exactly (\d+))");
  std::smatch m;
  if (std::regex_search(prompt, m, kNums)) n = std::stoul(m[1].str());
  const std::string claim = detail::sanitize_cell(detail::section_after(prompt, "[Claim to Prioritize]:"));

  FormattedDoc doc;
  if (kind == FormatKind::Table) {
    TableDoc t;
    t.caption = "Details";
    for (std::size_t i = 0; i < n; ++i) t.headers.push_back("Field " + std::to_string(i + 1));
    std::vector<std::string> row;
    for (std::size_t i = 0; i < n; ++i) row.push_back(i == 0 ? claim : "detail " + std::to_string(i + 1));
    t.rows.push_back(std::move(row));
    doc = std::move(t);
  } else if (kind == FormatKind::KG) {
    KgDoc k;
    for (std::size_t i = 0; i < n; ++i) {
      k.triples.push_back({"Subject", "fact_" + std::to_string(i + 1), i == 0 ? claim : "value " + std::to_string(i + 1)});
    }
    doc = std::move(k);
  } else {
    InfoboxDoc b;
    b.box_type = "topic";
    for (std::size_t i = 0; i < n; ++i) {
      b.pairs.emplace_back("key" + std::to_string(i + 1), i == 0 ? claim : "value " + std::to_string(i + 1));
    }
    doc = std::move(b);
  }
  return emit(doc);
}

class MockScript {
 public:
  MockScript() = default;

  static MockScript from_json(const nlohmann::json& j) {
    MockScript s;
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      MockRule rule;
      rule.model = r.value("model", "*");
      if (r.contains("kind")) {
        rule.kind = parse_prompt_kind(r["kind"].get<std::string>());
        if (!rule.kind) throw Error(Errc::Config, "mock rule has unknown kind '" + r["kind"].get<std::string>() + "'");
      }
      if (r.contains("contains")) {
        if (r["contains"].is_string()) {
          rule.contains.push_back(r["contains"].get<std::string>());
        } else {
          rule.contains = r["contains"].get<std::vector<std::string>>();
        }
      }
      rule.reply = r.value("reply", "");
      rule.status = r.value("status", 200);
      rule.finish_reason = r.value("finish_reason", "stop");
      s.rules_.push_back(std::move(rule));
    }
    s.filter_reply_ = j.value("filter_reply", s.filter_reply_);
    s.synthesize_conversions_ = j.value("synthesize_conversions", true);
    return s;
  }

  static MockScript load(const std::filesystem::path& path) {
    try {
      return from_json(nlohmann::json::parse(jsonl::read_text(path)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::Config, "mock script '" + path.string() + "': " + e.what());
    }
  }

  void add_rule(MockRule r) { rules_.push_back(std::move(r)); }

  BackendReply respond(const CompletionRequest& req) const {
    const std::string prompt = last_user_content(req);
    const PromptKind kind = classify_prompt(prompt);
    for (const auto& r : rules_) {
      if (r.model != "*" && r.model != req.model_id) continue;
      if (r.kind && *r.kind != kind) continue;
      bool all = true;
      for (const auto& c : r.contains) {
        if (prompt.find(c) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (!all) continue;
      BackendReply reply;
      reply.status = r.status;
      reply.text = r.reply;
      reply.finish_reason = r.finish_reason;
      if (r.status != 200) reply.error = "scripted failure";
      return reply;
    }
    if (kind == PromptKind::Conversion && synthesize_conversions_) {
      if (auto doc = synthesize_conversion(prompt)) return ok_reply(*doc);
    }
    if (kind == PromptKind::Filter) return ok_reply(filter_reply_);
    BackendReply miss;
    miss.status = 400;
    miss.error = "no mock rule matched " + std::string(to_string(kind)) + " prompt for model '" + req.model_id + "'";
    return miss;
  }

  MockChatBackend::Responder responder() const {
    return [copy = *this](const CompletionRequest& req) { return copy.respond(req); };
  }

 private:
  std::vector<MockRule> rules_;
  std::string filter_reply_ = "unknown";
  bool synthesize_conversions_ = true;
};

}  // namespace fmtbias
