// fmtbias command line: each subcommand runs one stage on files, `run` runs
// them all from a config.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fmtbias/fmtbias.hpp"

namespace fs = std::filesystem;
using namespace fmtbias;

namespace {

struct Common {
  std::string config;
  bool mock = false;
  bool resume = false;
  std::optional<std::uint64_t> seed_override;
  bool verbose = false;
};

ExperimentConfig load(const Common& c) {
  if (c.config.empty()) throw Error(Errc::Config, "--config is required");
  auto cfg = load_config(c.config, c.seed_override);
  if (c.mock) {
    cfg.mock = true;
    cfg.raw["mock"] = true;
  }
  return cfg;
}

std::vector<ContradictionCase> read_cases(const fs::path& p) {
  std::vector<ContradictionCase> out;
  jsonl::for_each(p, [&](const nlohmann::json& j, std::size_t) { out.push_back(j.get<ContradictionCase>()); });
  return out;
}

void write_cases(const fs::path& p, const std::vector<ContradictionCase>& cases) {
  jsonl::write_all(p, cases, [](const ContradictionCase& c) { return nlohmann::json(c); });
}

std::vector<AnswerRecord> read_answers(const fs::path& p) {
  std::vector<AnswerRecord> out;
  jsonl::for_each(p, [&](const nlohmann::json& j, std::size_t) { out.push_back(j.get<AnswerRecord>()); });
  return out;
}

void print_stats(const Gateway& gw) {
  const auto s = gw.stats();
  spdlog::info("requests={} backend_calls={} cache_hits={} network_calls={} failures={}", s.requests,
               s.backend_calls, s.cache_hits, s.network_calls, s.failures);
}

void write_or_print(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
  } else {
    jsonl::write_text(out, content);
  }
}

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
  auto* opt = app->add_option("--config", c.config, "Experiment config (JSON)");
  if (needs_config) opt->required();
  app->add_flag("--mock", c.mock, "Route every model to the scripted mock backend");
  app->add_option("--seed-override", c.seed_override, "Replace every configured seed with this value");
  app->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fmtbias"));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"Format-bias evaluation harness"};
  app.require_subcommand(1);
  Common common;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load claim records and build contradiction cases");
  add_common(ingest, common);
  std::string ingest_out;
  ingest->add_option("--out", ingest_out, "Cases JSONL")->required();

  // convert
  auto* conv = app.add_subcommand("convert", "Convert structured payloads with the converter model");
  add_common(conv, common);
  std::string conv_in, conv_out, conv_fail;
  conv->add_option("--in", conv_in, "Cases JSONL")->required();
  conv->add_option("--out", conv_out, "Converted cases JSONL")->required();
  conv->add_option("--failures", conv_fail, "Rejected conversions JSONL");

  // corrupt
  auto* corr = app.add_subcommand("corrupt", "Apply structural corruption to payloads with p > 0");
  add_common(corr, common);
  std::string corr_in, corr_out;
  corr->add_option("--in", corr_in, "Converted cases JSONL")->required();
  corr->add_option("--out", corr_out, "Corrupted cases JSONL")->required();

  // filter
  auto* filt = app.add_subcommand("filter", "Parametric-knowledge filter (16 zero-shot trials)");
  add_common(filt, common);
  std::string filt_in, filt_out, filt_outcomes, filt_model;
  filt->add_option("--in", filt_in, "Cases JSONL")->required();
  filt->add_option("--out", filt_out, "Retained cases JSONL")->required();
  filt->add_option("--outcomes", filt_outcomes, "Filter outcomes JSONL");
  filt->add_option("--model", filt_model, "Model to filter against (default: first configured model)");

  // run
  auto* run = app.add_subcommand("run", "Run the whole pipeline from a config");
  add_common(run, common);
  run->add_flag("--resume", common.resume, "Continue a previous run with the same config (cache replay)");

  // judge
  auto* judge = app.add_subcommand("judge", "Re-adjudicate an answers file");
  add_common(judge, common);
  std::string judge_cases, judge_answers_in, judge_out;
  judge->add_option("--cases", judge_cases, "Cases JSONL")->required();
  judge->add_option("--answers", judge_answers_in, "Answers JSONL")->required();
  judge->add_option("--out", judge_out, "Judged answers JSONL")->required();

  // metrics
  auto* met = app.add_subcommand("metrics", "Aggregate verdicts into DCR/FPR per group");
  std::string met_answers, met_out, met_group = "model,format_pair", met_binom = "doubled";
  met->add_option("--answers", met_answers, "Answers JSONL")->required();
  met->add_option("--out", met_out, "Metrics CSV (default stdout)");
  met->add_option("--group-by", met_group, "Comma-separated keys: model, format_pair, domain_tag, condition");
  met->add_option("--binomial-method", met_binom, "doubled | minlike")->check(CLI::IsMember({"doubled", "minlike"}));

  // report
  auto* rep = app.add_subcommand("report", "Render a metrics CSV");
  std::string rep_metrics, rep_format = "csv", rep_out;
  rep->add_option("--metrics", rep_metrics, "Metrics CSV")->required();
  rep->add_option("--format", rep_format, "csv | matrix-csv | markdown");
  rep->add_option("--out", rep_out, "Output file (default stdout)");

  // verify-sample
  auto* ver = app.add_subcommand("verify-sample", "Draw or summarize a conversion verification sample");
  std::string ver_cases, ver_out, ver_summarize;
  double ver_fraction = 0.05;
  std::uint64_t ver_seed = 4;
  ver->add_option("--cases", ver_cases, "Cases JSONL with converted payloads");
  ver->add_option("--fraction", ver_fraction, "Sampling fraction in (0, 1]");
  ver->add_option("--seed", ver_seed, "Sampling seed");
  ver->add_option("--out", ver_out, "Annotation CSV (default stdout)");
  ver->add_option("--summarize", ver_summarize, "Annotated CSV to summarize instead of sampling");

  // attention
  auto* att = app.add_subcommand("attention", "Attention-gap statistics over trace JSONL");
  std::string att_traces, att_rebalanced;
  bool att_first = false;
  double att_eps = 1e-9;
  att->add_option("--traces", att_traces, "Trace JSONL")->required();
  att->add_flag("--first-step", att_first, "Use only the first generated step");
  att->add_option("--epsilon", att_eps, "Rebalance epsilon");
  att->add_option("--rebalanced-out", att_rebalanced, "Write rebalanced traces here");

  CLI11_PARSE(app, argc, argv);
  if (common.verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (*ingest) {
      const auto cfg = load(common);
      const auto records = load_claim_records(cfg.corpus_path);
      const auto cases = stage_build(records, cfg.conditions, cfg.seeds.build);
      write_cases(ingest_out, cases);
      spdlog::info("{} records -> {} cases", records.size(), cases.size());
    } else if (*conv) {
      const auto cfg = load(common);
      auto gw = make_gateway(cfg);
      Attrition a;
      std::vector<ConversionFailure> failures;
      ConversionOptions opt;
      opt.converter_model = cfg.converter_model;
      auto cases = stage_convert(*gw, read_cases(conv_in), opt, cfg.workers ? cfg.workers : gw->default_workers(),
                                 failures, a);
      write_cases(conv_out, cases);
      if (!conv_fail.empty()) {
        jsonl::write_all(conv_fail, failures, [](const ConversionFailure& f) {
          return nlohmann::json{{"case_id", f.case_id}, {"side", std::string(1, f.side)}, {"error_code", f.error_code},
                                {"error", f.error}};
        });
      }
      spdlog::info("{} jobs, {} rejected, {} cases kept", a.conversion_jobs, a.conversion_failed_jobs, cases.size());
      print_stats(*gw);
    } else if (*corr) {
      const auto cfg = load(common);
      auto cases = read_cases(corr_in);
      Attrition a;
      stage_corrupt(cases, cfg.seeds.corruption, cfg.replacement_alphabet, a);
      write_cases(corr_out, cases);
      spdlog::info("{} payloads corrupted", a.payloads_corrupted);
    } else if (*filt) {
      const auto cfg = load(common);
      auto gw = make_gateway(cfg);
      const std::string model = !filt_model.empty() ? filt_model
                                : cfg.filter_mode == FilterMode::Reference ? cfg.filter_model
                                                                           : cfg.models.front();
      FilterOptions fo;
      fo.trials = cfg.filter_trials;
      const auto res = filter_parametric_knowledge(read_cases(filt_in), *gw, model, fo);
      write_cases(filt_out, res.retained);
      if (!filt_outcomes.empty()) {
        jsonl::write_all(filt_outcomes, res.outcomes, [](const FilterOutcome& o) { return nlohmann::json(o); });
      }
      spdlog::info("{} of {} cases retained for {}", res.retained.size(), res.outcomes.size(), model);
      print_stats(*gw);
    } else if (*run) {
      const auto cfg = load(common);
      auto gw = make_gateway(cfg);
      RunOptions ro;
      ro.resume = common.resume;
      const auto art = run_pipeline(cfg, *gw, ro);
      spdlog::info("metrics: {}", art.metrics_path.string());
      spdlog::info("manifest: {}", art.manifest_path.string());
      print_stats(*gw);
    } else if (*judge) {
      const auto cfg = load(common);
      auto gw = make_gateway(cfg);
      auto answers = read_answers(judge_answers_in);
      JudgeOptions jo;
      jo.judge_model = cfg.judge_model;
      jo.temperature = cfg.judge_temperature;
      judge_answers(*gw, answers, read_cases(judge_cases), jo);
      jsonl::write_all(judge_out, answers, [](const AnswerRecord& a) { return nlohmann::json(a); });
      print_stats(*gw);
    } else if (*met) {
      std::vector<std::string> keys;
      for (auto& k : text::split(met_group, ',')) {
        if (!text::trim(k).empty()) keys.emplace_back(text::trim(k));
      }
      const auto table = aggregate(read_answers(met_answers), keys,
                                   met_binom == "minlike" ? BinomialMethod::MinLikelihood : BinomialMethod::DoubledTail);
      write_or_print(met_out, metrics_csv_string(table));
    } else if (*rep) {
      const auto fmt = parse_report_format(rep_format);
      write_or_print(rep_out, emit_report(read_metrics_csv(rep_metrics), fmt));
    } else if (*ver) {
      if (!ver_summarize.empty()) {
        std::ifstream in(ver_summarize, std::ios::binary);
        if (!in) throw Error(Errc::Io, "cannot open '" + ver_summarize + "'");
        const auto s = summarize_verification(import_verification_csv(in));
        std::cout << nlohmann::json{{"sampled", s.sampled},         {"annotated", s.annotated},
                                    {"factual", s.factual},         {"factual_rate", s.factual_rate},
                                    {"syntax_valid", s.syntax_valid}, {"syntax_rate", s.syntax_rate}}
                         .dump(2)
                  << "\n";
      } else {
        if (ver_cases.empty()) throw Error(Errc::InvalidArgument, "--cases or --summarize is required");
        std::vector<SampleInput> inputs;
        for (const auto& c : read_cases(ver_cases)) {
          for (char side : {'A', 'B'}) {
            const auto& p = side == 'A' ? c.evidence_a : c.evidence_b;
            if (p.kind == FormatKind::Text || !p.converted) continue;
            inputs.push_back({c.case_id + "/" + side, p.kind, p.body});
          }
        }
        std::ostringstream os;
        export_verification_csv(os, draw_verification_sample(inputs, ver_fraction, ver_seed));
        write_or_print(ver_out, os.str());
      }
    } else if (*att) {
      const auto traces = read_traces(att_traces);
      const auto mode = att_first ? GapMode::FirstStep : GapMode::AllSteps;
      std::vector<AttentionTrace> rebalanced;
      for (const auto& t : traces) {
        const auto mm = mean_masses(t, mode);
        std::cout << nlohmann::json{{"case_id", t.meta.case_id}, {"model_id", t.meta.model_id},
                                    {"steps", t.rows.size()},    {"m1", mm.m1},
                                    {"m2", mm.m2},               {"gap", std::abs(mm.m1 - mm.m2)}}
                         .dump()
                  << "\n";
        if (!att_rebalanced.empty()) {
          AttentionTrace r = t;
          for (auto& row : r.rows) row = rebalance(row, r.segments, {att_eps});
          rebalanced.push_back(std::move(r));
        }
      }
      if (!att_rebalanced.empty()) write_traces(att_rebalanced, rebalanced);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
