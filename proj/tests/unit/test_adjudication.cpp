#include <gtest/gtest.h>

#include "support.hpp"

using namespace fmtbias;
using namespace fmtbias::testing;

namespace {

std::string between(const std::string& s, const std::string& from, const std::string& to) {
  const auto a = s.find(from);
  if (a == std::string::npos) return {};
  const auto b = s.find(to, a + from.size());
  return s.substr(a + from.size(), b - a - from.size());
}

// Judge that reads the Claim A / Claim B slots and checks which one's last
// word the answer mentions.
BackendReply claim_keyed_judge(const CompletionRequest& r) {
  const std::string p = r.messages.back().content;
  const std::string answer = between(p, "Answer:\n", "\nClaim A:");
  const std::string a = between(p, "Claim A:\n", "\nClaim B:");
  const std::string b = between(p, "Claim B:\n", "\nTask:");
  auto last_word = [](std::string s) {
    while (!s.empty() && !std::isalnum(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s.substr(s.rfind(' ') + 1);
  };
  const bool in_a = answer.find(last_word(a)) != std::string::npos;
  const bool in_b = answer.find(last_word(b)) != std::string::npos;
  return ok_reply(in_a && in_b ? "2" : in_a ? "1" : in_b ? "3" : "No");
}

}  // namespace

TEST(AnswerPrompt, OrderFollowsPresentation) {
  auto c = make_case("x");
  c.presented_order = PresentedOrder::AB;
  const auto ab = build_answer_prompt(c);
  EXPECT_LT(ab.find(c.evidence_a.body), ab.find(c.evidence_b.body));
  c.presented_order = PresentedOrder::BA;
  const auto ba = build_answer_prompt(c);
  EXPECT_LT(ba.find(c.evidence_b.body), ba.find(c.evidence_a.body));
  EXPECT_NE(ab.find("answer the following question **concisely**"), std::string::npos);
  EXPECT_NE(ab.find("Source A:\n" + c.evidence_a.body), std::string::npos);
  EXPECT_NE(ba.find("Source A:\n" + c.evidence_b.body), std::string::npos);
  EXPECT_NE(ab.find("Question: " + c.question), std::string::npos);
}

TEST(AnswerPrompt, MissingBody) {
  auto c = make_case("x");
  c.evidence_b.body.clear();
  try {
    build_answer_prompt(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingPayload);
  }
}

TEST(JudgePrompt, SlotsInterpolated) {
  const auto p = build_judge_prompt("Q?", "ans", "claim one", "claim two");
  EXPECT_NE(p.find("Question:\nQ?\nAnswer:\nans\nClaim A:\nclaim one\nClaim B:\nclaim two\n"), std::string::npos);
  EXPECT_EQ(classify_prompt(p), PromptKind::Judge);
}

TEST(JudgePrompt, SwappingClaimsOnlyTouchesClaimSlots) {
  const auto p1 = build_judge_prompt("Q?", "ans", "AAAA", "BBBBBB");
  const auto p2 = build_judge_prompt("Q?", "ans", "BBBBBB", "AAAA");
  EXPECT_EQ(p1.size(), p2.size());
  std::string q1 = p1, q2 = p2;
  text::replace_all(q1, "AAAA", "#");
  text::replace_all(q1, "BBBBBB", "#");
  text::replace_all(q2, "AAAA", "#");
  text::replace_all(q2, "BBBBBB", "#");
  EXPECT_EQ(q1, q2);
}

TEST(JudgePrompt, EmptyAnswerStillWellFormed) {
  const auto p = build_judge_prompt("Q?", "", "a", "b");
  EXPECT_NE(p.find("Answer:\n\nClaim A:"), std::string::npos);
}

TEST(Label, Parsing) {
  EXPECT_EQ(parse_judge_label("2"), JudgeLabel::Two);
  EXPECT_EQ(parse_judge_label("Score: 3."), JudgeLabel::Three);
  EXPECT_EQ(parse_judge_label("  1\n"), JudgeLabel::One);
  EXPECT_EQ(parse_judge_label("no"), JudgeLabel::No);
  EXPECT_EQ(parse_judge_label("**No** - neither"), JudgeLabel::No);
  EXPECT_FALSE(try_parse_judge_label("12"));
  EXPECT_FALSE(try_parse_judge_label("Nope"));
  try {
    parse_judge_label("maybe");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnparseableJudgeOutput);
  }
}

TEST(Majority, PublishedRules) {
  using L = JudgeLabel;
  auto v = majority_verdict({L::One, L::One, L::Three});
  EXPECT_EQ(v.kind, VerdictKind::PrefA);
  EXPECT_EQ(v.agreement, 2);
  v = majority_verdict({L::Two, L::Two, L::Two});
  EXPECT_EQ(v.kind, VerdictKind::Both);
  EXPECT_EQ(v.agreement, 3);
  EXPECT_EQ(majority_verdict({L::One, L::Two, L::Three}).kind, VerdictKind::Unresolved);
  EXPECT_EQ(majority_verdict({L::No, L::No, L::One}).kind, VerdictKind::Neither);
  EXPECT_EQ(majority_verdict({L::Three, L::Three}).kind, VerdictKind::PrefB);
  EXPECT_EQ(majority_verdict({L::Three}).kind, VerdictKind::Unresolved);
  EXPECT_EQ(majority_verdict({}).kind, VerdictKind::Unresolved);
}

TEST(Majority, PermutationInvariantExhaustive) {
  const std::array<JudgeLabel, 4> all = {JudgeLabel::One, JudgeLabel::Two, JudgeLabel::Three, JudgeLabel::No};
  for (auto a : all) {
    for (auto b : all) {
      for (auto c : all) {
        std::vector<JudgeLabel> v = {a, b, c};
        std::sort(v.begin(), v.end());
        const auto ref = majority_verdict(v);
        do {
          const auto got = majority_verdict(v);
          ASSERT_EQ(got.kind, ref.kind);
          ASSERT_EQ(got.agreement, ref.agreement);
        } while (std::next_permutation(v.begin(), v.end()));
      }
    }
  }
}

TEST(Adjudicate, ThreeCallsHappyPath) {
  std::vector<std::string> tags;
  std::mutex mu;
  auto m = mock_gateway([&](const CompletionRequest& r) {
    std::lock_guard lock(mu);
    tags.push_back(r.request_tag);
    return ok_reply("1");
  });
  const auto out = adjudicate(*m.gateway, {"case7", "Q?", "A", "ca", "cb"});
  ASSERT_TRUE(out.verdict);
  EXPECT_EQ(out.verdict->kind, VerdictKind::PrefA);
  EXPECT_EQ(out.calls, 3);
  EXPECT_EQ(m.backend->calls(), 3);
  std::sort(tags.begin(), tags.end());
  EXPECT_EQ(tags, (std::vector<std::string>{"case7.judge.0", "case7.judge.1", "case7.judge.2"}));
}

TEST(Adjudicate, PassesAreDistinctRequestsEvenWhenCached) {
  TempDir dir("judge");
  std::atomic<int> n{0};
  auto m = mock_gateway([&](const CompletionRequest&) { return ok_reply(std::to_string(1 + n++ % 3)); }, 1, 0,
                        dir.path());
  const auto first = adjudicate(*m.gateway, {"c", "Q?", "A", "ca", "cb"});
  EXPECT_EQ(m.backend->calls(), 3);
  const auto again = adjudicate(*m.gateway, {"c", "Q?", "A", "ca", "cb"});
  EXPECT_EQ(m.backend->calls(), 3);
  EXPECT_EQ(first.verdict, again.verdict);
}

TEST(Adjudicate, UnparseablePassRetriedOnce) {
  auto m = mock_gateway([](const CompletionRequest& r) {
    if (r.cache_salt == "judge-pass:1") return ok_reply("I think it is fine");
    if (r.cache_salt == "judge-pass:1:retry") return ok_reply("3");
    return ok_reply("3");
  });
  const auto out = adjudicate(*m.gateway, {"c", "Q?", "A", "ca", "cb"});
  EXPECT_EQ(out.calls, 4);
  EXPECT_EQ(out.verdict->kind, VerdictKind::PrefB);
  EXPECT_EQ(out.verdict->agreement, 3);
}

TEST(Adjudicate, DoublyUnparseablePassDropsOut) {
  auto m = mock_gateway([](const CompletionRequest& r) {
    return ok_reply(r.cache_salt.rfind("judge-pass:0", 0) == 0 ? "hmm" : r.cache_salt == "judge-pass:1" ? "1" : "3");
  });
  const auto out = adjudicate(*m.gateway, {"c", "Q?", "A", "ca", "cb"});
  ASSERT_TRUE(out.verdict);
  EXPECT_EQ(out.verdict->passes.size(), 2u);
  EXPECT_EQ(out.verdict->kind, VerdictKind::Unresolved);
}

TEST(Adjudicate, BackendFailureLeavesVerdictAbsent) {
  auto m = mock_gateway([](const CompletionRequest& r) {
    BackendReply bad;
    bad.status = 400;
    return r.cache_salt == "judge-pass:2" ? bad : ok_reply("1");
  });
  const auto out = adjudicate(*m.gateway, {"c", "Q?", "A", "ca", "cb"});
  EXPECT_FALSE(out.verdict);
  EXPECT_FALSE(out.error.empty());
}

// Presentation order must never flip PrefA/PrefB: labels bind to sources.
TEST(Adjudicate, SourceLabelsStableUnderPresentationSwap) {
  auto m = mock_gateway(claim_keyed_judge);
  for (int i = 0; i < 40; ++i) {
    auto c = make_case("case" + std::to_string(i));
    if (i % 2) std::swap(c.claim_a, c.claim_b);
    const std::string answer = i % 3 ? "It was Alice." : "Bob, it seems.";
    std::optional<VerdictKind> seen;
    for (auto order : {PresentedOrder::AB, PresentedOrder::BA}) {
      c.presented_order = order;
      std::vector<AnswerRecord> recs = {answer_stub(c, "m")};
      recs[0].answer_text = answer;
      judge_answers(*m.gateway, recs, {c});
      ASSERT_TRUE(recs[0].verdict);
      if (seen) {
        EXPECT_EQ(*seen, recs[0].verdict->kind);
      }
      seen = recs[0].verdict->kind;
    }
    const bool alice_is_a = c.claim_a.find("Alice") != std::string::npos;
    const bool says_alice = answer.find("Alice") != std::string::npos;
    EXPECT_EQ(*seen, says_alice == alice_is_a ? VerdictKind::PrefA : VerdictKind::PrefB);
  }
}

TEST(Elicit, GreedyAndFailuresRecorded) {
  auto m = mock_gateway([](const CompletionRequest& r) {
    EXPECT_EQ(r.temperature, 0.0);
    EXPECT_EQ(r.purpose, Purpose::Evaluation);
    BackendReply bad;
    bad.status = 400;
    return r.request_tag == "b.answer" ? bad : ok_reply("Alice");
  });
  auto missing = make_case("c");
  missing.evidence_a.body.clear();
  const auto recs = elicit_answers(*m.gateway, {make_case("a"), make_case("b"), missing}, "model-x");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].answer_text, "Alice");
  EXPECT_FALSE(recs[1].answer_text);
  EXPECT_FALSE(recs[1].error.empty());
  EXPECT_FALSE(recs[2].answer_text);
  EXPECT_NE(recs[2].error.find("MissingPayload"), std::string::npos);
  EXPECT_EQ(recs[0].format_pair, "texts vs texts");
}

TEST(JudgeAnswers, UnknownCaseRejected) {
  auto m = mock_gateway([](const CompletionRequest&) { return ok_reply("1"); });
  AnswerRecord r;
  r.case_id = "ghost";
  r.answer_text = "x";
  std::vector<AnswerRecord> recs = {r};
  EXPECT_THROW(judge_answers(*m.gateway, recs, {}), Error);
}

TEST(AnswerRecord, JsonRoundTrip) {
  AnswerRecord r;
  r.case_id = "c";
  r.model_id = "m";
  r.answer_text = "ans";
  r.verdict = Verdict{VerdictKind::PrefB, {JudgeLabel::Three, JudgeLabel::Three, JudgeLabel::No}, 2};
  r.judge_model = "j";
  r.format_pair = "tables vs texts";
  r.condition = "cond";
  r.domain_tag = "film";
  EXPECT_EQ(nlohmann::json(r).get<AnswerRecord>(), r);
  AnswerRecord bare;
  bare.case_id = "x";
  bare.model_id = "m";
  bare.error = "failed";
  EXPECT_EQ(nlohmann::json(bare).get<AnswerRecord>(), bare);
}
