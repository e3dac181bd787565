#pragma once

// Attention-mass bookkeeping over two evidence segments, the mass-equalizing
// rebalance, the attention-gap statistic, and the trace JSONL exchanged with
// the model-side hook process.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmtbias/adjudication.hpp"
#include "fmtbias/error.hpp"
#include "fmtbias/jsonl.hpp"
#include "fmtbias/stats.hpp"

namespace fmtbias {

struct AttentionRow {
  std::vector<double> weights;
};

struct SegmentSpec {
  std::vector<std::size_t> i1;
  std::vector<std::size_t> i2;
  bool operator==(const SegmentSpec&) const = default;
};

// Nonempty, disjoint, in range, no duplicates.
inline void validate_segments(const SegmentSpec& seg, std::size_t length) {
  if (seg.i1.empty() || seg.i2.empty()) throw Error(Errc::InvalidArgument, "segments must be nonempty");
  std::vector<char> seen(length, 0);
  for (int which = 1; which <= 2; ++which) {
    for (std::size_t j : which == 1 ? seg.i1 : seg.i2) {
      if (j >= length) {
        throw Error(Errc::IndexOutOfRange,
                    "segment index " + std::to_string(j) + " >= row length " + std::to_string(length));
      }
      if (seen[j]) throw Error(Errc::InvalidArgument, "segment index " + std::to_string(j) + " repeated or shared");
      seen[j] = static_cast<char>(which);
    }
  }
}

struct SegmentMasses {
  double m1 = 0.0;
  double m2 = 0.0;
};

inline SegmentMasses segment_masses(const AttentionRow& row, const SegmentSpec& seg) {
  validate_segments(seg, row.weights.size());
  SegmentMasses m;
  for (std::size_t j : seg.i1) m.m1 += row.weights[j];
  for (std::size_t j : seg.i2) m.m2 += row.weights[j];
  return m;
}

struct RebalanceParams {
  double epsilon = 1e-9;
};

// a'_j = mbar/(m1+eps) a_j on I1, mbar/(m2+eps) a_j on I2, a_j elsewhere,
// with mbar = (m1 + m2 + eps) / 2. No renormalization.
inline AttentionRow rebalance(const AttentionRow& row, const SegmentSpec& seg, const RebalanceParams& params = {}) {
  if (!(params.epsilon > 0.0)) throw Error(Errc::InvalidArgument, "epsilon must be positive");
  const auto m = segment_masses(row, seg);
  const double mbar = (m.m1 + m.m2 + params.epsilon) / 2.0;
  const double s1 = mbar / (m.m1 + params.epsilon);
  const double s2 = mbar / (m.m2 + params.epsilon);
  AttentionRow out = row;
  for (std::size_t j : seg.i1) out.weights[j] = s1 * row.weights[j];
  for (std::size_t j : seg.i2) out.weights[j] = s2 * row.weights[j];
  return out;
}

struct TraceMeta {
  std::string model_id;
  std::string case_id;
  int heads = 0;
  int layers = 0;
};

struct AttentionTrace {
  std::vector<AttentionRow> rows;  // one per generation step
  SegmentSpec segments;
  TraceMeta meta;
};

enum class GapMode { AllSteps, FirstStep };

struct MeanMasses {
  double m1 = 0.0;
  double m2 = 0.0;
};

inline MeanMasses mean_masses(const AttentionTrace& trace, GapMode mode = GapMode::AllSteps) {
  if (trace.rows.empty()) throw Error(Errc::EmptyTrace, "trace for '" + trace.meta.case_id + "' has no rows");
  const std::size_t n = mode == GapMode::FirstStep ? 1 : trace.rows.size();
  MeanMasses mm;
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = segment_masses(trace.rows[i], trace.segments);
    mm.m1 += m.m1;
    mm.m2 += m.m2;
  }
  mm.m1 /= static_cast<double>(n);
  mm.m2 /= static_cast<double>(n);
  return mm;
}

// |mean m1 - mean m2| over generation steps.
inline double attention_gap(const AttentionTrace& trace, GapMode mode = GapMode::AllSteps) {
  const auto mm = mean_masses(trace, mode);
  return std::abs(mm.m1 - mm.m2);
}

// ---- trace JSONL ----------------------------------------------------------------

inline nlohmann::json trace_row_json(const AttentionTrace& t, std::size_t step) {
  return {{"case_id", t.meta.case_id}, {"model_id", t.meta.model_id}, {"step", step},
          {"weights", t.rows[step].weights}, {"i1", t.segments.i1},     {"i2", t.segments.i2},
          {"heads", t.meta.heads},           {"layers", t.meta.layers}};
}

inline void write_traces(const std::filesystem::path& path, const std::vector<AttentionTrace>& traces) {
  std::vector<nlohmann::json> rows;
  for (const auto& t : traces) {
    for (std::size_t s = 0; s < t.rows.size(); ++s) rows.push_back(trace_row_json(t, s));
  }
  jsonl::write_all(path, rows, [](const nlohmann::json& j) { return j; });
}

// Groups rows by (case_id, model_id) in order of first appearance and sorts
// each trace by step. Steps must be 0..n-1 without gaps and all rows of a
// trace must carry the same segments.
inline std::vector<AttentionTrace> read_traces(const std::filesystem::path& path) {
  struct Pending {
    AttentionTrace trace;
    std::vector<std::pair<std::size_t, AttentionRow>> rows;
  };
  std::vector<Pending> pending;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t line) {
    auto fail = [&](const std::string& msg) {
      throw Error(Errc::Schema, path.filename().string() + ":" + std::to_string(line) + ": " + msg, line);
    };
    for (const char* k : {"case_id", "model_id", "step", "weights", "i1", "i2"}) {
      if (!j.contains(k)) fail(std::string("trace row lacks '") + k + "'");
    }
    try {
      const auto key = std::make_pair(j["case_id"].get<std::string>(), j["model_id"].get<std::string>());
      SegmentSpec seg{j["i1"].get<std::vector<std::size_t>>(), j["i2"].get<std::vector<std::size_t>>()};
      AttentionRow row{j["weights"].get<std::vector<double>>()};
      for (double w : row.weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail("attention weights must be finite and nonnegative");
      }
      try {
        validate_segments(seg, row.weights.size());
      } catch (const Error& e) {
        fail(e.what());
      }
      auto [it, fresh] = index.emplace(key, pending.size());
      if (fresh) {
        Pending p;
        p.trace.meta = {key.second, key.first, j.value("heads", 0), j.value("layers", 0)};
        p.trace.segments = seg;
        pending.push_back(std::move(p));
      } else if (!(pending[it->second].trace.segments == seg)) {
        fail("segments differ between steps of one trace");
      }
      pending[it->second].rows.emplace_back(j["step"].get<std::size_t>(), std::move(row));
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  });
  std::vector<AttentionTrace> out;
  for (auto& p : pending) {
    std::sort(p.rows.begin(), p.rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t s = 0; s < p.rows.size(); ++s) {
      if (p.rows[s].first != s) {
        throw Error(Errc::Schema, "trace '" + p.trace.meta.case_id + "' has a missing or duplicate step");
      }
      p.trace.rows.push_back(std::move(p.rows[s].second));
    }
    out.push_back(std::move(p.trace));
  }
  return out;
}

// ---- gap vs preference ------------------------------------------------------------

struct GapObservation {
  std::string case_id;
  double m1 = 0.0;  // mean mass on source A's segment
  double m2 = 0.0;  // mean mass on source B's segment
  VerdictKind verdict = VerdictKind::Unresolved;
};

struct LessAttendedSummary {
  std::size_t single_sided = 0;
  std::size_t prefer_less_attended = 0;
  double fraction = 0.0;
};

// Among PrefA/PrefB verdicts with unequal masses: how often the preferred
// source received less attention.
inline LessAttendedSummary less_attended_preference(const std::vector<GapObservation>& obs) {
  LessAttendedSummary s;
  for (const auto& o : obs) {
    if (o.verdict != VerdictKind::PrefA && o.verdict != VerdictKind::PrefB) continue;
    if (o.m1 == o.m2) continue;
    ++s.single_sided;
    const bool a_less = o.m1 < o.m2;
    if ((o.verdict == VerdictKind::PrefA) == a_less) ++s.prefer_less_attended;
  }
  if (s.single_sided) s.fraction = static_cast<double>(s.prefer_less_attended) / static_cast<double>(s.single_sided);
  return s;
}

// Spearman between per-condition gap and DCR (one pair per format pair).
inline TestResult gap_dcr_correlation(const std::vector<double>& gaps, const std::vector<double>& dcrs) {
  return spearman_rho(gaps, dcrs);
}

// Paired before/after comparison of DCR under the intervention (diff = after - before).
inline TestResult intervention_test(const std::vector<double>& before, const std::vector<double>& after) {
  if (before.size() != after.size()) throw Error(Errc::InvalidArgument, "before/after length mismatch");
  std::vector<double> d(before.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = after[i] - before[i];
  return wilcoxon_signed_rank(d);
}

// ---- hook process ---------------------------------------------------------------

enum class HookMode { ObserveOnly, Rebalance };
enum class HookReduce { MeanHeadsLayers, LastLayerMeanHeads };

struct HookConfig {
  std::string model_id;
  HookMode mode = HookMode::ObserveOnly;
  double epsilon = 1e-9;
  HookReduce reduce = HookReduce::MeanHeadsLayers;
  int max_new_tokens = 64;
};

inline nlohmann::json to_json(const HookConfig& c) {
  return {{"model_id", c.model_id},
          {"mode", c.mode == HookMode::Rebalance ? "Rebalance" : "ObserveOnly"},
          {"epsilon", c.epsilon},
          {"reduce", c.reduce == HookReduce::MeanHeadsLayers ? "MeanHeadsLayers" : "LastLayerMeanHeads"},
          {"max_new_tokens", c.max_new_tokens}};
}

// One line per case: the full prompt and the two evidence bodies, which the
// hook locates in the tokenized prompt to build I1 (source A) and I2 (source B).
inline nlohmann::json bridge_case_json(const ContradictionCase& c) {
  return {{"case_id", c.case_id},
          {"prompt", build_answer_prompt(c)},
          {"evidence_a_text", c.evidence_a.body},
          {"evidence_b_text", c.evidence_b.body}};
}

struct BridgeInvocation {
  std::vector<std::string> program;  // e.g. {"python3", "bridge.py"}
  std::filesystem::path case_file;
  std::filesystem::path hook_config;
  std::filesystem::path output_path;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

// argv: program..., case_file, hook_config, output_path
inline std::vector<std::string> bridge_argv(const BridgeInvocation& inv) {
  if (inv.program.empty()) throw Error(Errc::Config, "bridge program is not configured");
  std::vector<std::string> argv = inv.program;
  argv.push_back(inv.case_file.string());
  argv.push_back(inv.hook_config.string());
  argv.push_back(inv.output_path.string());
  return argv;
}

struct BridgeAnswer {
  std::string case_id;
  std::string answer_text;
  std::size_t steps = 0;
};

struct BridgeRun {
  std::vector<AttentionTrace> traces;
  std::vector<BridgeAnswer> answers;
};

// Runs the hook process and reads what it produced: traces at output_path and
// answers at output_path + ".answers.jsonl" (when present).
inline BridgeRun run_bridge(const BridgeInvocation& inv, const std::vector<ContradictionCase>& cases,
                            const HookConfig& cfg) {
  jsonl::write_all(inv.case_file, cases, bridge_case_json);
  jsonl::write_text(inv.hook_config, to_json(cfg).dump(2) + "\n");
  std::string cmd;
  for (const auto& a : bridge_argv(inv)) cmd += (cmd.empty() ? "" : " ") + shell_quote(a);
  const int rc = std::system(cmd.c_str());
  if (rc != 0) throw Error(Errc::TerminalBackend, "bridge exited with status " + std::to_string(rc));
  BridgeRun run;
  run.traces = read_traces(inv.output_path);
  const std::filesystem::path answers = inv.output_path.string() + ".answers.jsonl";
  if (std::filesystem::exists(answers)) {
    jsonl::for_each(answers, [&](const nlohmann::json& j, std::size_t) {
      run.answers.push_back({j.at("case_id").get<std::string>(), j.value("answer_text", ""),
                             j.value("steps", std::size_t{0})});
    });
  }
  return run;
}

}  // namespace fmtbias
