#include <gtest/gtest.h>

#include "support.hpp"

using namespace fmtbias;
using namespace fmtbias::testing;

namespace {

void write_records(const std::filesystem::path& p, const std::vector<ClaimRecord>& recs) {
  jsonl::write_all(p, recs, [](const ClaimRecord& r) { return nlohmann::json(r); });
}

FormatAssignmentPolicy table_vs_text() {
  FormatAssignmentPolicy p;
  p.condition = "tables vs texts";
  p.format_a = FormatKind::Table;
  p.format_b = FormatKind::Text;
  return p;
}

int trial_of(const CompletionRequest& r) {
  const auto& s = r.cache_salt;
  return std::stoi(s.substr(s.rfind(':') + 1));
}

}  // namespace

TEST(Load, WellFormedLines) {
  TempDir dir("load");
  write_records(dir / "r.jsonl", make_records(2));
  const auto recs = load_claim_records(dir / "r.jsonl");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0], make_record("rec0"));
}

TEST(Load, WrongCounterclaimCountNamesLine) {
  TempDir dir("load");
  auto j = nlohmann::json(make_record("bad"));
  j["counterclaims"].erase(2);
  jsonl::write_text(dir / "r.jsonl", nlohmann::json(make_record("ok")).dump() + "\n" + j.dump() + "\n");
  try {
    load_claim_records(dir / "r.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Schema);
    EXPECT_EQ(e.position(), 2u);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::vector<LoadDiagnostic> diags;
  const auto lenient = load_claim_records(dir / "r.jsonl", false, &diags);
  EXPECT_EQ(lenient.size(), 1u);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].line, 2u);
}

TEST(Load, SchemaViolations) {
  TempDir dir("load");
  auto check = [&](nlohmann::json j) {
    jsonl::write_text(dir / "r.jsonl", j.dump() + "\n");
    EXPECT_THROW(load_claim_records(dir / "r.jsonl"), Error) << j.dump();
  };
  auto base = nlohmann::json(make_record("x"));
  auto j1 = base;
  j1.erase("question");
  check(j1);
  auto j2 = base;
  j2["fact_claim"] = 5;
  check(j2);
  auto j3 = base;
  j3["counterclaims"][0]["claim"] = base["fact_claim"];
  check(j3);
  jsonl::write_text(dir / "r.jsonl", "{not json\n");
  EXPECT_THROW(load_claim_records(dir / "r.jsonl"), Error);
}

TEST(Load, FourThousandRecords) {
  TempDir dir("load");
  const auto recs = make_records(4000);
  write_records(dir / "r.jsonl", recs);
  const auto back = load_claim_records(dir / "r.jsonl");
  EXPECT_EQ(back.size(), 4000u);
  EXPECT_EQ(build_contradiction_cases(back, table_vs_text(), 1).size(), 12000u);
}

TEST(Build, ThreeCasesPerRecord) {
  for (std::size_t n : {0u, 1u, 2u, 17u}) {
    EXPECT_EQ(build_contradiction_cases(make_records(n), table_vs_text(), 3).size(), 3 * n);
  }
  const auto cs = build_contradiction_cases({make_record("r")}, table_vs_text(), 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(cs[static_cast<std::size_t>(i)].case_id, "r#" + std::to_string(i) + "@tables vs texts");
    EXPECT_EQ(cs[static_cast<std::size_t>(i)].evidence_a.kind, FormatKind::Table);
    EXPECT_EQ(cs[static_cast<std::size_t>(i)].evidence_b.kind, FormatKind::Text);
  }
}

TEST(Build, DeterministicBytes) {
  const auto recs = make_records(50);
  auto dump = [&](std::uint64_t seed) {
    std::string s;
    for (const auto& c : build_contradiction_cases(recs, table_vs_text(), seed)) s += nlohmann::json(c).dump() + "\n";
    return s;
  };
  EXPECT_EQ(dump(11), dump(11));
  EXPECT_NE(dump(11), dump(12));
}

TEST(Build, FactSideBalancedAndConsistent) {
  const auto recs = make_records(1000);
  const auto cs = build_contradiction_cases(recs, table_vs_text(), 5);
  int a = 0;
  for (const auto& c : cs) {
    a += c.fact_side == 'A';
    const auto& fact_payload = c.fact_side == 'A' ? c.evidence_a : c.evidence_b;
    EXPECT_NE(fact_payload.source_text.find("Alice Fact"), std::string::npos);
    EXPECT_NE(c.fact_claim().find("Alice Fact"), std::string::npos);
  }
  const double frac = a / 3000.0;
  EXPECT_GT(frac, 0.45);
  EXPECT_LT(frac, 0.55);
}

TEST(Build, RandomPairsAreDistinct) {
  FormatAssignmentPolicy p;
  p.random_pair = true;
  for (const auto& c : build_contradiction_cases(make_records(300), p, 9)) EXPECT_NE(c.evidence_a.kind, c.evidence_b.kind);
}

TEST(Build, TextPayloadsNeedNoConversion) {
  const auto c = build_contradiction_cases({make_record("r")}, table_vs_text(), 1).front();
  EXPECT_TRUE(c.evidence_a.body.empty());
  EXPECT_EQ(c.evidence_b.body, c.evidence_b.source_text);
}

TEST(Case, JsonRoundTrip) {
  auto c = build_contradiction_cases({make_record("r")}, table_vs_text(), 1).front();
  c.evidence_a.body = std::string(kFilmTable);
  c.evidence_a.entry_count = 4;
  c.evidence_a.corruption = {{"p", 0.45}};
  c = randomize_order(c, 8);
  EXPECT_EQ(nlohmann::json(c).get<ContradictionCase>(), c);
  FilterOutcome o{"id", "m", 16, 2, false, false};
  EXPECT_EQ(nlohmann::json(o).get<FilterOutcome>(), o);
}

TEST(Order, BalancedOverThousandCases) {
  const auto cs = build_contradiction_cases(make_records(334), table_vs_text(), 1);
  int ab = 0;
  for (std::size_t i = 0; i < 1000; ++i) ab += randomize_order(cs[i], 12345).presented_order == PresentedOrder::AB;
  EXPECT_GE(ab, 450);
  EXPECT_LE(ab, 550);
}

TEST(Order, DependsOnlyOnSeedAndCaseId) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10000; ++i) {
    auto c = make_case("c" + std::to_string(rng() % 5000));
    const std::uint64_t seed = rng() % 7;
    const auto o1 = randomize_order(c, seed).presented_order;
    c.question = "changed " + std::to_string(rng());
    c.claim_a.swap(c.claim_b);
    c.fact_side = c.fact_side == 'A' ? 'B' : 'A';
    ASSERT_EQ(randomize_order(c, seed).presented_order, o1);
  }
}

TEST(Order, LeavesSemanticLabelsAlone) {
  auto c = make_case("x");
  const auto r = randomize_order(c, 3);
  EXPECT_EQ(r.claim_a, c.claim_a);
  EXPECT_EQ(r.evidence_a, c.evidence_a);
  EXPECT_EQ(r.order_seed, 3u);
}

TEST(Filter, MatchRule) {
  auto c = make_case("m");
  EXPECT_TRUE(answer_matches_fact("It was alice.", c));
  EXPECT_FALSE(answer_matches_fact("Alicee did", c));
  c.fact_object.reset();
  EXPECT_TRUE(answer_matches_fact("directed by Alice", c));
  EXPECT_FALSE(answer_matches_fact("I don't know", c));
}

TEST(Filter, AlwaysFactMeansDropped) {
  auto m = mock_gateway([](const CompletionRequest&) { return ok_reply("Alice"); });
  const auto res = filter_parametric_knowledge({make_case("a")}, *m.gateway, "model");
  ASSERT_EQ(res.outcomes.size(), 1u);
  EXPECT_FALSE(res.outcomes[0].retained);
  EXPECT_EQ(res.outcomes[0].successes, 16);
  EXPECT_TRUE(res.retained.empty());
}

TEST(Filter, NeverFactMeansRetained) {
  auto m = mock_gateway([](const CompletionRequest&) { return ok_reply("No idea."); });
  const auto res = filter_parametric_knowledge({make_case("a")}, *m.gateway, "model");
  EXPECT_TRUE(res.outcomes[0].retained);
  EXPECT_EQ(res.outcomes[0].successes, 0);
  EXPECT_EQ(res.retained.size(), 1u);
  EXPECT_EQ(m.backend->calls(), 16);
}

// Retention is exactly "zero successes" across all 17 possible counts.
TEST(Filter, AllSeventeenSuccessCounts) {
  for (int k = 0; k <= 16; ++k) {
    auto m = mock_gateway([k](const CompletionRequest& r) { return ok_reply(trial_of(r) < k ? "Alice" : "Bob?"); });
    const auto res = filter_parametric_knowledge({make_case("a")}, *m.gateway, "model");
    EXPECT_EQ(res.outcomes[0].successes, k);
    EXPECT_EQ(res.outcomes[0].retained, k == 0) << k;
  }
}

TEST(Filter, GreedyRequestsAndSharedQuestions) {
  std::atomic<int> nonzero{0};
  auto m = mock_gateway([&](const CompletionRequest& r) {
    nonzero += r.temperature != 0.0;
    EXPECT_EQ(r.purpose, Purpose::Filter);
    EXPECT_EQ(r.messages.back().content.rfind(std::string(templates::kFilterInstruction), 0), 0u);
    return ok_reply("unknown");
  });
  const auto cs = build_contradiction_cases(make_records(2), table_vs_text(), 1);
  const auto res = filter_parametric_knowledge(cs, *m.gateway, "model");
  EXPECT_EQ(res.outcomes.size(), 6u);
  EXPECT_EQ(m.backend->calls(), 2 * 16);  // one query set per distinct question
  EXPECT_EQ(nonzero, 0);
}

TEST(Filter, FailureMakesCaseUndetermined) {
  auto m = mock_gateway([](const CompletionRequest& r) {
    BackendReply bad;
    bad.status = 400;
    return trial_of(r) == 5 ? bad : ok_reply("nothing");
  });
  const auto res = filter_parametric_knowledge({make_case("a")}, *m.gateway, "model");
  EXPECT_TRUE(res.outcomes[0].undetermined);
  EXPECT_FALSE(res.outcomes[0].retained);
}

TEST(Filter, MonotoneUnderRecordRemoval) {
  // the model "knows" records whose id hash is odd
  auto responder = [](const CompletionRequest& r) {
    const auto& p = r.messages.back().content;
    return ok_reply(fnv1a64(p) % 2 ? "Alice Fact" : "not sure");
  };
  const auto all = build_contradiction_cases(make_records(40), table_vs_text(), 1);
  auto m = mock_gateway(responder);
  const auto full = filter_parametric_knowledge(all, *m.gateway, "x");
  std::set<std::string> kept_full;
  for (const auto& c : full.retained) kept_full.insert(c.case_id);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ContradictionCase> subset;
    const std::string drop = "rec" + std::to_string(rng() % 40) + "#";
    for (const auto& c : all) {
      if (c.case_id.rfind(drop, 0) != 0) subset.push_back(c);
    }
    auto m2 = mock_gateway(responder);
    for (const auto& c : filter_parametric_knowledge(subset, *m2.gateway, "x").retained) {
      EXPECT_TRUE(kept_full.count(c.case_id)) << c.case_id;
    }
  }
}
