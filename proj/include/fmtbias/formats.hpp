#pragma once

// Parsing, emission, validation and entry counting for the four evidence
// formats: plain text, MediaWiki tables, MediaWiki infoboxes and
// parenthesized KG triples.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fmtbias/error.hpp"
#include "fmtbias/format_kind.hpp"
#include "fmtbias/text_util.hpp"

namespace fmtbias {

struct TextDoc {
  std::string body;
  bool operator==(const TextDoc&) const = default;
};

struct TableDoc {
  std::string attributes = R"(class="wikitable")";
  std::optional<std::string> caption;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;
  bool operator==(const TableDoc&) const = default;
};

struct InfoboxDoc {
  std::string box_type;
  std::vector<std::pair<std::string, std::string>> pairs;
  bool operator==(const InfoboxDoc&) const = default;
};

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool operator==(const Triple&) const = default;
};

struct KgDoc {
  std::vector<Triple> triples;
  bool operator==(const KgDoc&) const = default;
};

using FormattedDoc = std::variant<TextDoc, TableDoc, InfoboxDoc, KgDoc>;

inline FormatKind kind_of(const FormattedDoc& doc) noexcept {
  switch (doc.index()) {
    case 1: return FormatKind::Table;
    case 2: return FormatKind::Infobox;
    case 3: return FormatKind::KG;
    default: return FormatKind::Text;
  }
}

struct FormatIssue {
  std::size_t position = 0;  // byte offset into the original input
  Errc code = Errc::UnexpectedContent;
  std::string description;
  bool operator==(const FormatIssue&) const = default;
};

struct ValidationReport {
  FormatKind kind = FormatKind::Text;
  bool valid = true;
  std::vector<FormatIssue> issues;
};

namespace detail {

// Peels surrounding whitespace, one markdown code fence (```lang ... ```) and
// one pair of stray wrapping double quotes. The result is a view into `s`.
inline std::string_view strip_wrapping(std::string_view s) {
  std::string_view v = text::trim(s);
  if (v.substr(0, 3) == "```") {
    std::size_t nl = v.find('\n');
    v = nl == std::string_view::npos ? std::string_view{} : v.substr(nl + 1);
    v = text::trim(v);
    if (v.size() >= 3 && v.substr(v.size() - 3) == "```") v.remove_suffix(3);
    v = text::trim(v);
  }
  if (!v.empty() && v.front() == '"') v.remove_prefix(1);
  if (!v.empty() && v.back() == '"') v.remove_suffix(1);
  return text::trim(v);
}

inline std::size_t offset_in(std::string_view whole, std::string_view part) noexcept {
  return static_cast<std::size_t>(part.data() - whole.data());
}

// Splits `s` at every occurrence of any separator in `seps` (all of equal
// length 2), trimming each cell.
inline std::vector<std::string> split_cells(std::string_view s,
                                            std::initializer_list<std::string_view> seps) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i + 1 < s.size()) {
    bool hit = false;
    for (auto sep : seps) {
      if (s.substr(i, sep.size()) == sep) {
        cells.emplace_back(text::trim(s.substr(start, i - start)));
        i += sep.size();
        start = i;
        hit = true;
        break;
      }
    }
    if (!hit) ++i;
  }
  cells.emplace_back(text::trim(s.substr(start)));
  return cells;
}

class IssueSink {
 public:
  explicit IssueSink(std::vector<FormatIssue>& out) : out_(out) {}
  void add(std::size_t pos, Errc code, std::string description) {
    out_.push_back({pos, code, std::move(description)});
  }

 private:
  std::vector<FormatIssue>& out_;
};

inline TableDoc parse_table(std::string_view src, IssueSink issues) {
  TableDoc doc;
  doc.attributes.clear();
  const std::string_view body = strip_wrapping(src);
  const std::size_t base = offset_in(src, body);
  const auto lines = text::split_lines(body);

  enum class State { Begin, Open, Closed } state = State::Begin;
  std::vector<std::string> current;
  std::size_t current_offset = 0;
  std::vector<std::size_t> row_offsets;
  auto flush_row = [&] {
    if (!current.empty()) {
      doc.rows.push_back(std::move(current));
      row_offsets.push_back(current_offset);
    }
    current.clear();
  };

  for (const auto& line : lines) {
    const std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t pos = base + text::content_offset(line);
    if (state == State::Closed) {
      issues.add(pos, Errc::UnexpectedContent, "content after table end '|}'");
      continue;
    }
    if (state == State::Begin) {
      state = State::Open;
      if (t.substr(0, 2) == "{|") {
        doc.attributes = std::string(text::trim(t.substr(2)));
        continue;
      }
      issues.add(pos, Errc::UnbalancedDelimiters, "table must open with '{|'");
      // fall through: treat the line as table content
    }
    if (t.substr(0, 2) == "|}") {
      flush_row();
      state = State::Closed;
      if (!text::trim(t.substr(2)).empty()) {
        issues.add(pos + 2, Errc::UnexpectedContent, "content after '|}'");
      }
    } else if (t.substr(0, 2) == "|-") {
      flush_row();
      current_offset = pos;
    } else if (t.substr(0, 2) == "|+") {
      if (doc.caption || !doc.rows.empty() || !current.empty()) {
        issues.add(pos, Errc::UnexpectedContent, "caption must precede rows and appear once");
      } else {
        doc.caption = std::string(text::trim(t.substr(2)));
      }
    } else if (t.substr(0, 2) == "{|") {
      issues.add(pos, Errc::UnexpectedContent, "nested tables are not supported");
    } else if (t.front() == '!') {
      auto cells = split_cells(t.substr(1), {"!!", "||"});
      if (doc.rows.empty() && current.empty()) {
        for (auto& c : cells) doc.headers.push_back(std::move(c));
      } else {
        if (current.empty()) current_offset = pos;
        for (auto& c : cells) current.push_back(std::move(c));
      }
    } else if (t.front() == '|') {
      if (current.empty()) current_offset = pos;
      for (auto& c : split_cells(t.substr(1), {"||"})) current.push_back(std::move(c));
    } else {
      issues.add(pos, Errc::UnexpectedContent, "line is not a table row, cell or delimiter");
    }
  }
  if (state == State::Begin) {
    issues.add(base, Errc::UnbalancedDelimiters, "empty input; table must open with '{|'");
  } else if (state == State::Open) {
    flush_row();
    issues.add(base + body.size(), Errc::UnbalancedDelimiters, "table is missing closing '|}'");
  }

  if (!doc.rows.empty()) {
    const std::size_t arity = doc.headers.empty() ? doc.rows.front().size() : doc.headers.size();
    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
      if (doc.rows[r].size() != arity) {
        issues.add(row_offsets[r], Errc::RowArityMismatch,
                   "row " + std::to_string(r + 1) + " has " + std::to_string(doc.rows[r].size()) +
                       " cells, expected " + std::to_string(arity));
      }
    }
  }
  return doc;
}

inline InfoboxDoc parse_infobox(std::string_view src, IssueSink issues) {
  InfoboxDoc doc;
  const std::string_view body = strip_wrapping(src);
  const std::size_t base = offset_in(src, body);
  const auto lines = text::split_lines(body);

  enum class State { Begin, Open, Closed } state = State::Begin;

  auto parse_fields = [&](std::string_view t, std::size_t pos) {
    // t starts with '|'; fields are separated by '|'.
    std::size_t i = 0;
    while (i < t.size()) {
      std::size_t next = t.find('|', i + 1);
      std::string_view field = t.substr(i + 1, next == std::string_view::npos ? t.npos : next - i - 1);
      const std::size_t field_pos = pos + i;
      if (!text::trim(field).empty()) {
        std::size_t eq = field.find('=');
        if (eq == std::string_view::npos) {
          issues.add(field_pos, Errc::MalformedField, "infobox field lacks '='");
        } else {
          std::string key(text::trim(field.substr(0, eq)));
          std::string value(text::trim(field.substr(eq + 1)));
          if (key.empty()) {
            issues.add(field_pos, Errc::MalformedField, "infobox field has an empty key");
          } else {
            doc.pairs.emplace_back(std::move(key), std::move(value));
          }
        }
      }
      if (next == std::string_view::npos) break;
      i = next;
    }
  };

  for (const auto& line : lines) {
    std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t pos = base + text::content_offset(line);
    if (state == State::Closed) {
      issues.add(pos, Errc::UnexpectedContent, "content after infobox end '}}'");
      continue;
    }
    if (state == State::Begin) {
      state = State::Open;
      if (t.substr(0, 2) != "{{") {
        issues.add(pos, Errc::MissingInfoboxHeader, "infobox must open with '{{Infobox <type>'");
        if (t.front() != '|' && t.substr(0, 2) != "}}") continue;
      } else {
        std::string_view rest = text::trim(t.substr(2));
        bool closes = rest.size() >= 2 && rest.substr(rest.size() - 2) == "}}";
        if (closes) rest = text::trim(rest.substr(0, rest.size() - 2));
        if (rest.size() < 7 || !text::iequals(rest.substr(0, 7), "infobox")) {
          issues.add(pos, Errc::MissingInfoboxHeader, "header must name an 'Infobox' template");
        } else {
          // fields may follow the type on the header line
          std::string_view type = rest.substr(7);
          const std::size_t bar = type.find('|');
          if (bar != std::string_view::npos) {
            parse_fields(type.substr(bar), pos + static_cast<std::size_t>(type.data() - t.data()) + bar);
            type = type.substr(0, bar);
          }
          doc.box_type = std::string(text::trim(type));
        }
        if (closes) state = State::Closed;
        continue;
      }
    }
    if (t.substr(0, 2) == "}}") {
      state = State::Closed;
      if (!text::trim(t.substr(2)).empty()) {
        issues.add(pos + 2, Errc::UnexpectedContent, "content after '}}'");
      }
    } else if (t.front() == '|') {
      bool closes = t.size() >= 2 && t.substr(t.size() - 2) == "}}";
      if (closes) t = text::trim(t.substr(0, t.size() - 2));
      parse_fields(t, pos);
      if (closes) state = State::Closed;
    } else {
      issues.add(pos, Errc::UnexpectedContent, "line is not an infobox field");
    }
  }
  if (state == State::Begin) {
    issues.add(base, Errc::MissingInfoboxHeader, "empty input; infobox header missing");
  } else if (state == State::Open) {
    issues.add(base + body.size(), Errc::UnbalancedDelimiters, "infobox is missing closing '}}'");
  }
  return doc;
}

inline KgDoc parse_kg(std::string_view src, IssueSink issues) {
  KgDoc doc;
  const std::string_view body = strip_wrapping(src);
  const std::size_t base = offset_in(src, body);
  for (const auto& line : text::split_lines(body)) {
    const std::string_view t = text::trim(line.text);
    if (t.empty()) continue;
    const std::size_t pos = base + text::content_offset(line);
    const bool opens = t.front() == '(';
    const bool closes = t.back() == ')';
    if (!opens || !closes || t.size() < 2) {
      issues.add(pos, opens != closes ? Errc::UnbalancedDelimiters : Errc::MalformedTriple,
                 "triple must be enclosed in '(' ... ')'");
      continue;
    }
    const std::string_view inner = t.substr(1, t.size() - 2);
    const std::size_t c1 = inner.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : inner.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      issues.add(pos, Errc::MalformedTriple, "triple needs three comma-separated components");
      continue;
    }
    Triple tr{std::string(text::trim(inner.substr(0, c1))),
              std::string(text::trim(inner.substr(c1 + 1, c2 - c1 - 1))),
              std::string(text::trim(inner.substr(c2 + 1)))};
    if (tr.subject.empty() || tr.predicate.empty() || tr.object.empty()) {
      issues.add(pos, Errc::MalformedTriple, "triple has an empty component");
      continue;
    }
    doc.triples.push_back(std::move(tr));
  }
  return doc;
}

inline FormattedDoc parse_collecting(FormatKind kind, std::string_view text,
                                     std::vector<FormatIssue>& issues) {
  IssueSink sink(issues);
  switch (kind) {
    case FormatKind::Table: return parse_table(text, sink);
    case FormatKind::Infobox: return parse_infobox(text, sink);
    case FormatKind::KG: return parse_kg(text, sink);
    case FormatKind::Text: break;
  }
  return TextDoc{std::string(text)};
}

inline bool has_newline(std::string_view s) noexcept {
  return s.find('\n') != std::string_view::npos || s.find('\r') != std::string_view::npos;
}

inline bool is_trimmed(std::string_view s) noexcept { return text::trim(s).size() == s.size(); }

[[noreturn]] inline void refuse(const std::string& what) {
  throw Error(Errc::InvariantViolation, what);
}

inline void check_cell(std::string_view cell, bool header) {
  if (has_newline(cell) || !is_trimmed(cell) || cell.find("||") != std::string_view::npos ||
      (header && cell.find("!!") != std::string_view::npos)) {
    refuse("table cell '" + std::string(cell) + "' cannot be emitted losslessly");
  }
}

inline std::string emit_table(const TableDoc& doc) {
  if (has_newline(doc.attributes) || !is_trimmed(doc.attributes)) refuse("bad table attributes");
  for (const auto& h : doc.headers) check_cell(h, true);
  const std::size_t arity =
      doc.headers.empty() ? (doc.rows.empty() ? 0 : doc.rows.front().size()) : doc.headers.size();
  for (const auto& row : doc.rows) {
    if (row.empty() || row.size() != arity) refuse("table rows must share the header arity");
    for (const auto& c : row) check_cell(c, false);
  }
  std::string out = doc.attributes.empty() ? "{|" : "{| " + doc.attributes;
  out += '\n';
  if (doc.caption) {
    if (has_newline(*doc.caption) || !is_trimmed(*doc.caption)) refuse("bad table caption");
    out += "|+ " + *doc.caption + "\n";
  }
  if (!doc.headers.empty()) out += "|-\n! " + text::join(doc.headers, " !! ") + "\n";
  for (const auto& row : doc.rows) out += "|-\n| " + text::join(row, " || ") + "\n";
  out += "|}";
  return out;
}

inline std::string emit_infobox(const InfoboxDoc& doc) {
  auto bad = [](std::string_view s) {
    return has_newline(s) || !is_trimmed(s) || s.find('|') != std::string_view::npos ||
           s.find("}}") != std::string_view::npos;
  };
  if (bad(doc.box_type)) refuse("bad infobox type '" + doc.box_type + "'");
  std::string out = doc.box_type.empty() ? "{{Infobox\n" : "{{Infobox " + doc.box_type + "\n";
  for (const auto& [key, value] : doc.pairs) {
    if (key.empty() || bad(key) || key.find('=') != std::string::npos) {
      refuse("bad infobox key '" + key + "'");
    }
    if (bad(value)) refuse("bad infobox value '" + value + "'");
    out += "| " + key + " = " + value + "\n";
  }
  out += "}}";
  return out;
}

inline std::string emit_kg(const KgDoc& doc) {
  std::string out;
  for (const auto& t : doc.triples) {
    for (const auto* c : {&t.subject, &t.predicate, &t.object}) {
      if (c->empty() || has_newline(*c) || !is_trimmed(*c)) refuse("bad triple component '" + *c + "'");
    }
    if (t.subject.find(',') != std::string::npos || t.predicate.find(',') != std::string::npos) {
      refuse("subject and predicate must not contain ','");
    }
    if (!out.empty()) out += '\n';
    out += "(" + t.subject + ", " + t.predicate + ", " + t.object + ")";
  }
  return out;
}

}  // namespace detail

// Parses `text` as `kind`. Throws Error carrying the first issue's code and
// byte offset. Text passes through verbatim.
inline FormattedDoc parse(FormatKind kind, std::string_view text) {
  std::vector<FormatIssue> issues;
  FormattedDoc doc = detail::parse_collecting(kind, text, issues);
  if (!issues.empty()) {
    const auto& first = issues.front();
    throw Error(first.code, first.description + " (offset " + std::to_string(first.position) + ")",
                first.position);
  }
  return doc;
}

// Canonical surface form: '\n' line endings, single spaces around separators.
// Throws Error(InvariantViolation) for docs that cannot round-trip.
inline std::string emit(const FormattedDoc& doc) {
  return std::visit(
      [](const auto& d) -> std::string {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, TextDoc>) {
          return d.body;
        } else if constexpr (std::is_same_v<T, TableDoc>) {
          return detail::emit_table(d);
        } else if constexpr (std::is_same_v<T, InfoboxDoc>) {
          return detail::emit_infobox(d);
        } else {
          return detail::emit_kg(d);
        }
      },
      doc);
}

// Table -> data cells (rows x arity; caption and headers excluded),
// Infobox -> key-value pairs, KG -> triples.
inline std::size_t count_entries(const FormattedDoc& doc) {
  if (const auto* t = std::get_if<TableDoc>(&doc)) {
    std::size_t n = 0;
    for (const auto& row : t->rows) n += row.size();
    return n;
  }
  if (const auto* i = std::get_if<InfoboxDoc>(&doc)) return i->pairs.size();
  if (const auto* k = std::get_if<KgDoc>(&doc)) return k->triples.size();
  throw Error(Errc::NotCountable, "plain text has no countable entries");
}

inline ValidationReport validate(FormatKind kind, std::string_view text) noexcept {
  ValidationReport report;
  report.kind = kind;
  try {
    detail::parse_collecting(kind, text, report.issues);
  } catch (const std::exception& e) {
    report.issues.push_back({0, Errc::UnexpectedContent, e.what()});
  }
  report.valid = report.issues.empty();
  return report;
}

// Markdown fences and wrapping quotes removed; used to store converter output.
inline std::string strip_fences(std::string_view text) {
  return std::string(detail::strip_wrapping(text));
}

}  // namespace fmtbias
