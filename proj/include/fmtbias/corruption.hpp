#pragma once

// Structural-token corruption: each syntax token of a structured payload is
// independently swapped for a single replacement character with probability p.
// Content bytes are never touched.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fmtbias/error.hpp"
#include "fmtbias/format_kind.hpp"
#include "fmtbias/hashing.hpp"
#include "fmtbias/text_util.hpp"

namespace fmtbias {

inline const std::vector<std::string>& default_replacement_alphabet() {
  static const std::vector<std::string> kAlphabet = {"#", "~", "@", " "};
  return kAlphabet;
}

struct CorruptionSpec {
  double p = 0.0;
  std::vector<std::string> replacement_alphabet = default_replacement_alphabet();
  std::uint64_t seed = 0;
};

struct StructuralToken {
  std::size_t offset = 0;
  std::size_t length = 0;
  bool operator==(const StructuralToken&) const = default;
};

struct OutputSpan {
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct CorruptionResult {
  std::string text;
  std::size_t tokens_total = 0;
  std::size_t tokens_replaced = 0;
  std::vector<std::size_t> positions;     // input offsets of replaced tokens
  std::vector<OutputSpan> output_tokens;  // every structural token, in output coordinates
};

namespace detail {

inline void push_all(std::vector<StructuralToken>& out, std::string_view line, std::size_t base,
                     std::size_t from, std::string_view sep) {
  std::size_t i = from;
  while ((i = line.find(sep, i)) != std::string_view::npos) {
    out.push_back({base + i, sep.size()});
    i += sep.size();
  }
}

inline void table_tokens(std::string_view text, std::vector<StructuralToken>& out) {
  for (const auto& line : text::split_lines(text)) {
    const std::size_t lead = text::content_offset(line) - line.offset;
    const std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t at = line.offset + lead;
    if (t.substr(0, 2) == "{|" || t.substr(0, 2) == "|}" || t.substr(0, 2) == "|-" ||
        t.substr(0, 2) == "|+") {
      out.push_back({at, 2});
    } else if (t.front() == '!') {
      out.push_back({at, 1});
      // header cells may be separated by either "!!" or "||"
      std::size_t i = 1;
      while (i + 1 < t.size()) {
        if (t.substr(i, 2) == "!!" || t.substr(i, 2) == "||") {
          out.push_back({at + i, 2});
          i += 2;
        } else {
          ++i;
        }
      }
    } else if (t.front() == '|') {
      out.push_back({at, 1});
      push_all(out, t, at, 1, "||");
    }
  }
}

inline void infobox_tokens(std::string_view text, std::vector<StructuralToken>& out) {
  for (const auto& line : text::split_lines(text)) {
    std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t at = text::content_offset(line);
    std::size_t head = 0;
    if (t.substr(0, 2) == "{{" || t.substr(0, 2) == "}}") {
      out.push_back({at, 2});
      head = 2;
    }
    std::size_t tail = t.size();
    bool closing = t.size() >= head + 2 && t.substr(t.size() - 2) == "}}";
    if (closing) tail -= 2;
    if (head == 0 && !t.empty() && t.front() == '|') {
      bool in_field = false;
      for (std::size_t i = 0; i < tail; ++i) {
        if (t[i] == '|') {
          out.push_back({at + i, 1});
          in_field = true;
        } else if (t[i] == '=' && in_field) {
          out.push_back({at + i, 1});
          in_field = false;
        }
      }
    }
    if (closing) out.push_back({at + tail, 2});
  }
}

inline void kg_tokens(std::string_view text, std::vector<StructuralToken>& out) {
  for (const auto& line : text::split_lines(text)) {
    const std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t at = text::content_offset(line);
    const bool opens = t.front() == '(';
    const bool closes = t.size() > (opens ? 1u : 0u) && t.back() == ')';
    const std::size_t end = closes ? t.size() - 1 : t.size();
    if (opens) out.push_back({at, 1});
    int commas = 0;
    for (std::size_t i = opens ? 1 : 0; i < end && commas < 2; ++i) {
      if (t[i] == ',') {
        out.push_back({at + i, 1});
        ++commas;
      }
    }
    if (closes) out.push_back({at + t.size() - 1, 1});
  }
}

}  // namespace detail

// Structural tokens in source order. Multi-character tokens ("{|", "||",
// "}}", ...) are reported once with their length.
inline std::vector<StructuralToken> structural_tokens(FormatKind kind, std::string_view text) {
  std::vector<StructuralToken> out;
  switch (kind) {
    case FormatKind::Table: detail::table_tokens(text, out); break;
    case FormatKind::Infobox: detail::infobox_tokens(text, out); break;
    case FormatKind::KG: detail::kg_tokens(text, out); break;
    case FormatKind::Text:
      throw Error(Errc::NotApplicable, "plain text has no structural tokens");
  }
  return out;
}

inline std::vector<std::size_t> structural_positions(FormatKind kind, std::string_view text) {
  std::vector<std::size_t> out;
  for (const auto& tok : structural_tokens(kind, text)) out.push_back(tok.offset);
  return out;
}

inline void validate_corruption_spec(const CorruptionSpec& spec) {
  if (!(spec.p >= 0.0 && spec.p <= 1.0)) {
    throw Error(Errc::InvalidArgument, "corruption probability must lie in [0, 1]");
  }
  if (spec.replacement_alphabet.empty()) {
    throw Error(Errc::Config, "replacement alphabet is empty");
  }
  for (const auto& r : spec.replacement_alphabet) {
    if (r.size() != 1 || r == "\n" || r == "\r") {
      throw Error(Errc::Config, "replacement alphabet entries must be single non-newline characters");
    }
  }
}

// Token i is replaced iff u_i < p, where u_i is a hash of (seed, i). Because
// the draw does not depend on p, a higher p at the same seed replaces a
// superset of the tokens replaced at a lower p.
inline CorruptionResult corrupt(FormatKind kind, std::string_view text, const CorruptionSpec& spec) {
  validate_corruption_spec(spec);
  const auto tokens = structural_tokens(kind, text);

  CorruptionResult res;
  res.tokens_total = tokens.size();
  res.text.reserve(text.size());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    res.text.append(text.substr(cursor, tok.offset - cursor));
    const std::uint64_t h = hash_combine(spec.seed, static_cast<std::uint64_t>(i));
    const bool replace = spec.p > 0.0 && unit_double(h) < spec.p;
    const std::size_t out_at = res.text.size();
    if (replace) {
      const std::uint64_t pick = splitmix64(h ^ 0x5851f42d4c957f2dULL);
      res.text += spec.replacement_alphabet[pick % spec.replacement_alphabet.size()];
      res.positions.push_back(tok.offset);
      ++res.tokens_replaced;
      res.output_tokens.push_back({out_at, 1});
    } else {
      res.text.append(text.substr(tok.offset, tok.length));
      res.output_tokens.push_back({out_at, tok.length});
    }
    cursor = tok.offset + tok.length;
  }
  res.text.append(text.substr(cursor));
  return res;
}

}  // namespace fmtbias
