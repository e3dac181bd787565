#pragma once

// Grouping verdicts into a metrics table, CSV persistence, and the report
// shapes built from it (long CSV, model x pair matrix, markdown summary).

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fmtbias/adjudication.hpp"
#include "fmtbias/csv.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/stats.hpp"

namespace fmtbias {

inline const std::vector<std::string>& known_group_keys() {
  static const std::vector<std::string> kKeys = {"model", "format_pair", "domain_tag", "condition"};
  return kKeys;
}

struct MetricsRow {
  std::vector<std::string> key;  // one value per MetricsTable::group_by entry
  VerdictCounts counts;
  std::optional<double> dcr;
  std::optional<double> fpr;
  std::optional<double> p_binomial;  // H0: FPR = 0.5

  // recompute ratios and the test from counts
  void finalize(BinomialMethod method = BinomialMethod::DoubledTail) {
    const auto total = counts.pref_a + counts.pref_b + counts.both;
    dcr = total ? std::optional<double>(compute_dcr(counts)) : std::nullopt;
    if (counts.pref_a + counts.pref_b) {
      fpr = compute_fpr(counts);
      p_binomial = binomial_two_sided(counts.pref_a, counts.pref_a + counts.pref_b, 0.5, method).p_value;
    } else {
      fpr.reset();
      p_binomial.reset();
    }
  }
};

struct MetricsTable {
  std::vector<std::string> group_by;
  std::vector<MetricsRow> rows;

  const MetricsRow* find(const std::vector<std::string>& key) const {
    for (const auto& r : rows) {
      if (r.key == key) return &r;
    }
    return nullptr;
  }
};

inline std::string group_value(const AnswerRecord& r, const std::string& key) {
  if (key == "model") return r.model_id;
  if (key == "format_pair") return r.format_pair;
  if (key == "domain_tag") return r.domain_tag;
  if (key == "condition") return r.condition;
  throw Error(Errc::UnknownGroupKey, "unknown group key '" + key + "'");
}

inline void tally(VerdictCounts& c, VerdictKind v) noexcept {
  switch (v) {
    case VerdictKind::PrefA: ++c.pref_a; break;
    case VerdictKind::PrefB: ++c.pref_b; break;
    case VerdictKind::Both: ++c.both; break;
    case VerdictKind::Neither: ++c.neither; break;
    case VerdictKind::Unresolved: ++c.unresolved; break;
  }
}

// Rows come out sorted by key. Records without a verdict are skipped.
inline MetricsTable aggregate(const std::vector<AnswerRecord>& answers, const std::vector<std::string>& group_by,
                              BinomialMethod method = BinomialMethod::DoubledTail) {
  for (const auto& k : group_by) {
    if (std::find(known_group_keys().begin(), known_group_keys().end(), k) == known_group_keys().end()) {
      throw Error(Errc::UnknownGroupKey, "unknown group key '" + k + "'");
    }
  }
  std::map<std::vector<std::string>, VerdictCounts> groups;
  for (const auto& a : answers) {
    if (!a.verdict) continue;
    std::vector<std::string> key;
    key.reserve(group_by.size());
    for (const auto& k : group_by) key.push_back(group_value(a, k));
    tally(groups[key], a.verdict->kind);
  }
  MetricsTable t;
  t.group_by = group_by;
  for (auto& [key, counts] : groups) {
    MetricsRow row{key, counts, {}, {}, {}};
    row.finalize(method);
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Table built straight from published counts (no answer records).
inline MetricsRow metrics_row(std::vector<std::string> key, const VerdictCounts& counts,
                              BinomialMethod method = BinomialMethod::DoubledTail) {
  MetricsRow row{std::move(key), counts, {}, {}, {}};
  row.finalize(method);
  return row;
}

// ---- CSV ------------------------------------------------------------------------

inline std::string format_real(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

inline std::vector<std::string> metrics_csv_header(const MetricsTable& t) {
  std::vector<std::string> h = t.group_by;
  for (const char* c : {"pref_a", "pref_b", "both", "unresolved", "neither", "dcr", "fpr", "p_binomial"}) {
    h.emplace_back(c);
  }
  return h;
}

inline void write_metrics_csv(std::ostream& os, const MetricsTable& t) {
  csv::write_row(os, metrics_csv_header(t));
  for (const auto& r : t.rows) {
    std::vector<std::string> row = r.key;
    for (auto v : {r.counts.pref_a, r.counts.pref_b, r.counts.both, r.counts.unresolved, r.counts.neither}) {
      row.push_back(std::to_string(v));
    }
    row.push_back(format_real(r.dcr));
    row.push_back(format_real(r.fpr));
    row.push_back(format_real(r.p_binomial));
    csv::write_row(os, row);
  }
}

inline std::string metrics_csv_string(const MetricsTable& t) {
  std::ostringstream os;
  write_metrics_csv(os, t);
  return os.str();
}

inline MetricsTable read_metrics_csv(std::istream& is) {
  const auto rows = csv::read(is);
  if (rows.empty()) throw Error(Errc::Schema, "metrics CSV is empty");
  const auto& h = rows.front();
  const std::size_t fixed = 8;
  if (h.size() < fixed || h[h.size() - fixed] != "pref_a") throw Error(Errc::Schema, "not a metrics CSV header");
  MetricsTable t;
  t.group_by.assign(h.begin(), h.end() - fixed);
  const std::size_t nk = t.group_by.size();
  auto opt_real = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<double>(std::stod(s)); };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != h.size()) throw Error(Errc::Schema, "metrics CSV row " + std::to_string(i + 1) + " has wrong arity", i + 1);
    MetricsRow m;
    m.key.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(nk));
    m.counts.pref_a = std::stoull(r[nk]);
    m.counts.pref_b = std::stoull(r[nk + 1]);
    m.counts.both = std::stoull(r[nk + 2]);
    m.counts.unresolved = std::stoull(r[nk + 3]);
    m.counts.neither = std::stoull(r[nk + 4]);
    m.dcr = opt_real(r[nk + 5]);
    m.fpr = opt_real(r[nk + 6]);
    m.p_binomial = opt_real(r[nk + 7]);
    t.rows.push_back(std::move(m));
  }
  return t;
}

inline MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  return read_metrics_csv(in);
}

// ---- reports -------------------------------------------------------------------

enum class ReportFormat { Csv, MatrixCsv, Markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "matrix-csv") return ReportFormat::MatrixCsv;
  if (s == "markdown") return ReportFormat::Markdown;
  throw Error(Errc::UnknownFormat, "unknown report format '" + std::string(s) + "'");
}

inline constexpr double kSignificance = 0.05;

inline std::string significance_flag(std::optional<double> p) { return p && *p < kSignificance ? "*" : ""; }

namespace detail {

inline std::optional<std::size_t> column(const MetricsTable& t, const std::string& key) {
  auto it = std::find(t.group_by.begin(), t.group_by.end(), key);
  if (it == t.group_by.end()) return std::nullopt;
  return static_cast<std::size_t>(it - t.group_by.begin());
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace detail

// Long format: keys, counts, ratios, p, significance flag.
inline std::string report_csv(const MetricsTable& t) {
  std::ostringstream os;
  auto header = metrics_csv_header(t);
  header.emplace_back("significant");
  csv::write_row(os, header);
  for (const auto& r : t.rows) {
    std::vector<std::string> row = r.key;
    for (auto v : {r.counts.pref_a, r.counts.pref_b, r.counts.both, r.counts.unresolved, r.counts.neither}) {
      row.push_back(std::to_string(v));
    }
    row.push_back(format_real(r.dcr));
    row.push_back(format_real(r.fpr));
    row.push_back(format_real(r.p_binomial));
    row.push_back(significance_flag(r.p_binomial));
    csv::write_row(os, row);
  }
  return os.str();
}

// Models down, format pairs across; each cell "FPR" with a trailing "*" when
// p_binomial < 0.05. Needs "model" and "format_pair" among the group keys.
inline std::string report_matrix_csv(const MetricsTable& t) {
  std::ostringstream os;
  const auto mcol = detail::column(t, "model");
  const auto pcol = detail::column(t, "format_pair");
  if (t.rows.empty()) {
    csv::write_row(os, {"model"});
    return os.str();
  }
  if (!mcol || !pcol) throw Error(Errc::UnknownGroupKey, "matrix report needs 'model' and 'format_pair' groups");
  std::vector<std::string> models, pairs;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  for (const auto& r : t.rows) {
    const auto& m = r.key[*mcol];
    const auto& p = r.key[*pcol];
    detail::push_unique(models, m);
    detail::push_unique(pairs, p);
    char buf[32];
    std::string cell;
    if (r.fpr) {
      std::snprintf(buf, sizeof buf, "%.4f", *r.fpr);
      cell = buf + significance_flag(r.p_binomial);
    }
    cells[{m, p}] = cell;
  }
  std::vector<std::string> header = {"model"};
  header.insert(header.end(), pairs.begin(), pairs.end());
  csv::write_row(os, header);
  for (const auto& m : models) {
    std::vector<std::string> row = {m};
    for (const auto& p : pairs) {
      auto it = cells.find({m, p});
      row.push_back(it == cells.end() ? "" : it->second);
    }
    csv::write_row(os, row);
  }
  return os.str();
}

// One line per group plus a macro-average footer per format pair (when that
// key is present): the layout of a "mean FPR / DCR across models" summary.
inline std::string report_markdown(const MetricsTable& t) {
  std::ostringstream os;
  os << "|";
  for (const auto& k : t.group_by) os << ' ' << k << " |";
  os << " Pref-A | Pref-B | Both | DCR | FPR | p |\n|";
  for (std::size_t i = 0; i < t.group_by.size() + 6; ++i) os << "---|";
  os << '\n';
  auto pct = [](std::optional<double> v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
    return std::string(buf);
  };
  auto pval = [](std::optional<double> v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", *v);
    return std::string(buf) + (*v < kSignificance ? "*" : "");
  };
  for (const auto& r : t.rows) {
    os << "|";
    for (const auto& k : r.key) os << ' ' << k << " |";
    os << ' ' << r.counts.pref_a << " | " << r.counts.pref_b << " | " << r.counts.both << " | " << pct(r.dcr) << " | "
       << pct(r.fpr) << " | " << pval(r.p_binomial) << " |\n";
  }
  const auto pcol = detail::column(t, "format_pair");
  if (pcol && !t.rows.empty()) {
    std::vector<std::string> pairs;
    std::map<std::string, std::vector<double>> fprs, dcrs;
    for (const auto& r : t.rows) {
      const auto& p = r.key[*pcol];
      detail::push_unique(pairs, p);
      if (r.fpr) fprs[p].push_back(*r.fpr);
      if (r.dcr) dcrs[p].push_back(*r.dcr);
    }
    os << "\n| format pair | mean FPR | mean DCR | groups |\n|---|---|---|---|\n";
    for (const auto& p : pairs) {
      auto mean = [](const std::vector<double>& v) {
        return v.empty() ? std::optional<double>() : std::optional<double>(macro_average(v));
      };
      os << "| " << p << " | " << pct(mean(fprs[p])) << " | " << pct(mean(dcrs[p])) << " | " << fprs[p].size()
         << " |\n";
    }
  }
  return os.str();
}

inline std::string emit_report(const MetricsTable& t, ReportFormat f) {
  switch (f) {
    case ReportFormat::Csv: return report_csv(t);
    case ReportFormat::MatrixCsv: return report_matrix_csv(t);
    case ReportFormat::Markdown: return report_markdown(t);
  }
  throw Error(Errc::UnknownFormat, "unknown report format");
}

}  // namespace fmtbias
