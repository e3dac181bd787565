#pragma once

// Shared fixtures and generators for the unit and acceptance suites.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "fmtbias/fmtbias.hpp"

namespace fmtbias::testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fmtbias_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The film example used throughout the converter prompts.
inline constexpr std::string_view kFilmTable = R"({| class="wikitable"
|+ Details of 'Grave of the Fireflies'
|-
! Film Title !! Director !! Studio !! Runtime
|-
| Grave of the Fireflies || Isao Takahata || Studio Ghibli || 89 minutes
|})";

inline constexpr std::string_view kFilmInfobox = R"({{Infobox film
| title = Grave of the Fireflies
| director = Isao Takahata
| studio = Studio Ghibli
| runtime = 89 minutes
| year = 1988
}})";

inline constexpr std::string_view kFilmTriples = R"((Grave of the Fireflies, has_director, Isao Takahata)
(Grave of the Fireflies, has_studio, Studio Ghibli)
(Grave of the Fireflies, has_runtime_minutes, 89)
(Grave of the Fireflies, release_year, 1988))";

// ---- random documents -----------------------------------------------------

class DocGen {
 public:
  explicit DocGen(std::uint64_t seed) : rng_(seed) {}

  std::string word() {
    static const std::vector<std::string> kWords = {
        "Grave", "Fireflies", "Takahata", "Ghibli", "1988", "89", "minutes", "river", "north", "Über",
        "café", "x-ray", "O'Neil", "3.5", "alpha", "beta", "gamma", "delta", "St.", "(film)", "e=mc2", "a:b", "-",
        "!", "50%", "#1", "~", "@home", "{x}", "[ref]"};
    return kWords[pick(kWords.size())];
  }

  std::string phrase(std::size_t max_words = 4) {
    std::string s = word();
    const std::size_t n = pick(max_words);
    for (std::size_t i = 0; i < n; ++i) s += " " + word();
    return s;
  }

  // Words that cannot collide with any delimiter of the given role.
  std::string safe_phrase(const std::string& banned) {
    for (;;) {
      std::string s = phrase();
      bool ok = true;
      for (char c : banned) ok = ok && s.find(c) == std::string::npos;
      if (ok && s.find("||") == std::string::npos && s.find("!!") == std::string::npos &&
          s.find("}}") == std::string::npos) {
        return s;
      }
    }
  }

  TableDoc table() {
    TableDoc t;
    if (coin()) t.caption = safe_phrase("|");
    const std::size_t arity = 1 + pick(5);
    // header-less tables have their own tests
    for (std::size_t i = 0; i < arity; ++i) t.headers.push_back(safe_phrase("|!"));
    const std::size_t rows = pick(5);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<std::string> row;
      for (std::size_t i = 0; i < arity; ++i) row.push_back(safe_phrase("|"));
      t.rows.push_back(std::move(row));
    }
    return t;
  }

  InfoboxDoc infobox() {
    InfoboxDoc b;
    b.box_type = safe_phrase("|=");
    const std::size_t n = pick(13);
    for (std::size_t i = 0; i < n; ++i) b.pairs.emplace_back(safe_phrase("|="), safe_phrase("|"));
    return b;
  }

  KgDoc kg() {
    KgDoc k;
    const std::size_t n = pick(13);
    for (std::size_t i = 0; i < n; ++i) {
      k.triples.push_back({safe_phrase(",()"), safe_phrase(",()"), coin() ? phrase() + ", " + word() : phrase()});
    }
    return k;
  }

  FormattedDoc doc(FormatKind kind) {
    switch (kind) {
      case FormatKind::Table: return table();
      case FormatKind::Infobox: return infobox();
      case FormatKind::KG: return kg();
      case FormatKind::Text: break;
    }
    return TextDoc{phrase(12)};
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin() { return pick(2) == 1; }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// ---- corpus fixtures --------------------------------------------------------

inline ClaimRecord make_record(const std::string& id, const std::string& domain = "film") {
  ClaimRecord r;
  r.id = id;
  r.subject = "Subject " + id;
  r.relation = "director";
  r.question = "Who directed " + id + "?";
  r.fact_claim = id + " was directed by Alice Fact.";
  r.fact_evidence = "Sources agree that " + id + " was directed by Alice Fact in 1990.";
  r.fact_object = "Alice Fact";
  for (int i = 0; i < 3; ++i) {
    const std::string who = "Bob Counter" + std::to_string(i);
    r.counterclaims.push_back({id + " was directed by " + who + ".", "Records show " + id + " was directed by " + who + "."});
  }
  r.domain_tag = domain;
  return r;
}

inline std::vector<ClaimRecord> make_records(std::size_t n) {
  std::vector<ClaimRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_record("rec" + std::to_string(i)));
  return out;
}

inline ContradictionCase make_case(const std::string& id, FormatKind a = FormatKind::Text,
                                   FormatKind b = FormatKind::Text) {
  ContradictionCase c;
  c.case_id = id;
  c.record_id = id;
  c.condition = "cond";
  c.question = "Who directed " + id + "?";
  c.claim_a = id + " was directed by Alice.";
  c.claim_b = id + " was directed by Bob.";
  c.fact_object = "Alice";
  c.evidence_a = make_payload(a, "Alice directed " + id + ".", std::nullopt, 0.0);
  c.evidence_b = make_payload(b, "Bob directed " + id + ".", std::nullopt, 0.0);
  if (a != FormatKind::Text) c.evidence_a.body = "(" + id + ", directed_by, Alice)";
  if (b != FormatKind::Text) c.evidence_b.body = "(" + id + ", directed_by, Bob)";
  return c;
}

// Gateway with a single mock backend; the backend is returned for call counting.
struct MockGateway {
  std::shared_ptr<MockChatBackend> backend;
  std::unique_ptr<Gateway> gateway;
};

inline MockGateway mock_gateway(MockChatBackend::Responder responder, int max_in_flight = 4, int retry_max = 0,
                                std::optional<std::filesystem::path> cache = std::nullopt, int delay_ms = 0) {
  MockGateway m;
  m.backend = std::make_shared<MockChatBackend>(std::move(responder), delay_ms);
  m.gateway = std::make_unique<Gateway>(std::move(cache));
  BackendConfig cfg;
  cfg.name = "mock";
  cfg.max_in_flight = max_in_flight;
  cfg.retry_max = retry_max;
  cfg.backoff_base_ms = 0;
  m.gateway->add_backend(cfg, m.backend);
  m.gateway->set_sleeper([](std::chrono::milliseconds) {});
  return m;
}

// ---- published aggregates -------------------------------------------------------

struct PublishedPair {
  const char* model;
  const char* pair;
  std::uint64_t pref_a, pref_b, both;
};

// Text-vs-structured response counts, ten models x three pairs.
inline const std::vector<PublishedPair>& published_text_vs_structured() {
  static const std::vector<PublishedPair> kRows = {
      {"Llama-3.1-8B-Instruct", "infobox vs texts", 487, 1170, 186},
      {"Llama-3.1-8B-Instruct", "tables vs texts", 725, 927, 195},
      {"Llama-3.1-8B-Instruct", "kg vs texts", 556, 1208, 70},
      {"GPT-4o-mini", "infobox vs texts", 333, 1353, 179},
      {"GPT-4o-mini", "tables vs texts", 532, 907, 432},
      {"GPT-4o-mini", "kg vs texts", 503, 1030, 291},
      {"Qwen3-8B", "infobox vs texts", 439, 1413, 73},
      {"Qwen3-8B", "tables vs texts", 692, 1028, 205},
      {"Qwen3-8B", "kg vs texts", 630, 1011, 138},
      {"Qwen3-14B", "infobox vs texts", 447, 1293, 177},
      {"Qwen3-14B", "tables vs texts", 580, 958, 383},
      {"Qwen3-14B", "kg vs texts", 583, 1123, 211},
      {"Qwen3-32B", "infobox vs texts", 398, 1371, 132},
      {"Qwen3-32B", "tables vs texts", 683, 890, 331},
      {"Qwen3-32B", "kg vs texts", 650, 1015, 237},
      {"Qwen3-30B-A3B", "infobox vs texts", 369, 1445, 94},
      {"Qwen3-30B-A3B", "tables vs texts", 651, 1002, 265},
      {"Qwen3-30B-A3B", "kg vs texts", 627, 1118, 166},
      {"Gemma-2-9b-it", "infobox vs texts", 521, 1329, 84},
      {"Gemma-2-9b-it", "tables vs texts", 657, 1123, 152},
      {"Gemma-2-9b-it", "kg vs texts", 490, 1340, 99},
      {"Gemma-2-27b-it", "infobox vs texts", 513, 1306, 161},
      {"Gemma-2-27b-it", "tables vs texts", 782, 844, 349},
      {"Gemma-2-27b-it", "kg vs texts", 638, 1001, 339},
      {"GLM-4-9b-chat", "infobox vs texts", 446, 1352, 46},
      {"GLM-4-9b-chat", "tables vs texts", 728, 1206, 32},
      {"GLM-4-9b-chat", "kg vs texts", 559, 1356, 46},
      {"Mistral-7B-Instruct-v0.3", "infobox vs texts", 244, 1675, 53},
      {"Mistral-7B-Instruct-v0.3", "tables vs texts", 647, 1247, 85},
      {"Mistral-7B-Instruct-v0.3", "kg vs texts", 562, 1350, 58},
  };
  return kRows;
}

// Answer records reproducing given counts for one (model, pair) group.
inline void append_answers(std::vector<AnswerRecord>& out, const std::string& model, const std::string& pair,
                           std::uint64_t pref_a, std::uint64_t pref_b, std::uint64_t both) {
  auto add = [&](VerdictKind k, std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) {
      AnswerRecord r;
      r.case_id = model + "/" + pair + "/" + std::string(to_string(k)) + std::to_string(i);
      r.model_id = model;
      r.format_pair = pair;
      r.answer_text = "x";
      r.verdict = Verdict{k, {}, 3};
      out.push_back(std::move(r));
    }
  };
  add(VerdictKind::PrefA, pref_a);
  add(VerdictKind::PrefB, pref_b);
  add(VerdictKind::Both, both);
}

struct AttentionPublished {
  const char* model;
  const char* pair;
  double avg_diff;
  double both;
  double total;
};

inline const std::vector<AttentionPublished>& published_attention() {
  static const std::vector<AttentionPublished> kRows = {
      {"Qwen3-8B", "infoboxes vs tables", 0.0134, 292, 1903},
      {"Qwen3-8B", "infoboxes vs texts", 0.3126, 112, 1874},
      {"Qwen3-8B", "infoboxes vs KGs", 0.1912, 97, 1964},
      {"Qwen3-8B", "tables vs texts", 0.3020, 159, 1870},
      {"Qwen3-8B", "tables vs KGs", 0.1672, 110, 1971},
      {"Qwen3-8B", "texts vs KGs", -0.1265, 209, 1943},
      {"Mistral-7B", "infoboxes vs tables", -0.0667, 276, 1971},
      {"Mistral-7B", "infoboxes vs texts", 0.2928, 54, 1923},
      {"Mistral-7B", "infoboxes vs KGs", 0.1667, 83, 2030},
      {"Mistral-7B", "tables vs texts", 0.3765, 107, 1919},
      {"Mistral-7B", "tables vs KGs", 0.2455, 116, 2034},
      {"Mistral-7B", "texts vs KGs", -0.1511, 100, 1999},
      {"Llama-3.1-8B", "infoboxes vs tables", -0.0207, 711, 1858},
      {"Llama-3.1-8B", "infoboxes vs texts", 0.3451, 468, 1799},
      {"Llama-3.1-8B", "infoboxes vs KGs", 0.1236, 510, 1900},
      {"Llama-3.1-8B", "tables vs texts", 0.3697, 615, 1821},
      {"Llama-3.1-8B", "tables vs KGs", 0.1591, 587, 1920},
      {"Llama-3.1-8B", "texts vs KGs", -0.2183, 343, 1885},
  };
  return kRows;
}

// ---- scripted mock experiment ------------------------------------------------------

// Seven records (21 built cases) under "tables vs texts". The converter is
// scripted to return a malformed table for one case whose table side carries
// counterclaim evidence, so that case is dropped and 20 remain. Each record gets a fixed answer and the judge a fixed
// label per answer, so the expected counts follow by hand.
struct ScriptedExperiment {
  ExperimentConfig config;
  std::string failing_case;
  std::vector<std::string> labels;  // judge reply per record
  VerdictCounts expected;
};

inline ScriptedExperiment scripted_experiment(const std::filesystem::path& dir) {
  ScriptedExperiment x;
  x.labels = {"1", "1", "3", "2", "1", "No", "3"};
  const auto records = make_records(x.labels.size());
  jsonl::write_all(dir / "records.jsonl", records, [](const ClaimRecord& r) { return nlohmann::json(r); });

  nlohmann::json cond = {{"kind", "FormatPair"}, {"format_a", "table"}, {"format_b", "text"}};
  nlohmann::json cfg = {{"corpus_path", "records.jsonl"},
                        {"models", {"target-model"}},
                        {"conditions", {cond}},
                        {"seeds", {{"build", 7}, {"order", 8}, {"corruption", 9}, {"sampling", 10}}},
                        {"output_dir", "run"},
                        {"mock", true},
                        {"mock_script", "script.json"},
                        {"workers", 4}};
  jsonl::write_text(dir / "config.json", cfg.dump(2));

  // find a case whose table side is built from counterclaim evidence
  const auto probe = config_from_json(cfg, dir);
  const auto built = stage_build(records, probe.conditions, probe.seeds.build);
  const ContradictionCase* victim = nullptr;
  for (const auto& c : built) {
    if (c.fact_side == 'B') {
      victim = &c;
      break;
    }
  }
  if (!victim) throw std::logic_error("no case with a counterclaim table side");
  x.failing_case = victim->case_id;

  nlohmann::json rules = nlohmann::json::array();
  rules.push_back({{"kind", "conversion"}, {"contains", {victim->evidence_a.source_text}}, {"reply", "{| broken"}});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string reply = "scripted answer " + std::to_string(i) + ".";
    rules.push_back({{"kind", "answer"}, {"contains", {records[i].question}}, {"reply", reply}});
    rules.push_back({{"kind", "judge"}, {"contains", {reply}}, {"reply", x.labels[i]}});
  }
  jsonl::write_text(dir / "script.json", nlohmann::json{{"rules", rules}, {"filter_reply", "No idea."}}.dump(2));

  for (const auto& c : built) {
    if (c.case_id == x.failing_case) continue;
    const auto& label = x.labels[static_cast<std::size_t>(std::stoi(c.record_id.substr(3)))];
    if (label == "1") ++x.expected.pref_a;
    if (label == "3") ++x.expected.pref_b;
    if (label == "2") ++x.expected.both;
    if (label == "No") ++x.expected.neither;
  }
  x.config = load_config(dir / "config.json");
  return x;
}

}  // namespace fmtbias::testing
