#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace fmtbias;
using fmtbias::testing::TempDir;

TEST(Hashing, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hashing, Fnv1aReference) {
  // published FNV-1a 64 test values
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(short_hash("a"), "af63dc4c8601ec8c");
}

TEST(Hashing, UnitDoubleRange) {
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = unit_double(splitmix64(i));
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  EXPECT_NE(hash_combine(1, std::string_view("x")), hash_combine(2, std::string_view("x")));
}

TEST(TextUtil, TrimAndSplit) {
  EXPECT_EQ(text::trim("  a b \n"), "a b");
  EXPECT_EQ(text::trim(""), "");
  auto parts = text::split("a,,b", ',');
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1], "");
  EXPECT_EQ(text::join({"x", "y"}, " || "), "x || y");
  std::string s = "aXbXc";
  text::replace_all(s, "X", "--");
  EXPECT_EQ(s, "a--b--c");
}

TEST(TextUtil, SplitLinesOffsets) {
  const std::string src = "ab\r\n  cd\nef";
  const auto lines = text::split_lines(src);
  ASSERT_EQ(lines.size(), 3u);
  for (const auto& l : lines) EXPECT_EQ(src.substr(l.offset, l.text.size()), l.text);
  EXPECT_EQ(text::content_offset(lines[1]), src.find("cd"));
}

TEST(TextUtil, WordMatching) {
  EXPECT_TRUE(text::contains_words(text::normalize_for_match("It was Isao Takahata."), text::normalize_for_match("isao takahata")));
  EXPECT_FALSE(text::contains_words(text::normalize_for_match("Isaoo Takahata"), text::normalize_for_match("Isao")));
}

TEST(Csv, RoundTripAwkwardFields) {
  const std::vector<csv::Row> rows = {{"a", "b,c", "say \"hi\""}, {"multi\nline", "", " space "}, {"x"}};
  std::string blob;
  for (const auto& r : rows) blob += csv::format_row(r) + "\n";
  EXPECT_EQ(csv::parse(blob), rows);
  std::istringstream in(blob);
  EXPECT_EQ(csv::read(in), rows);
}

TEST(Csv, CrLfAndMissingTrailingNewline) {
  const auto rows = csv::parse("a,b\r\n1,2");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (csv::Row{"1", "2"}));
}

TEST(Jsonl, WriteReadAndLineErrors) {
  TempDir dir("jsonl");
  const auto p = dir / "x.jsonl";
  std::vector<int> xs = {1, 2, 3};
  jsonl::write_all(p, xs, [](int v) { return nlohmann::json{{"v", v}}; });
  const auto back = jsonl::read_all(p);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2]["v"], 3);

  jsonl::write_text(p, "{\"v\":1}\n\nnot json\n{\"v\":2}\n");
  std::vector<std::size_t> bad;
  std::size_t good = 0;
  jsonl::for_each(p, [&](const nlohmann::json&, std::size_t) { ++good; },
                  [&](const jsonl::LineError& e) { bad.push_back(e.line); });
  EXPECT_EQ(good, 2u);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0], 3u);
  try {
    jsonl::read_all(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Schema);
    EXPECT_EQ(e.position(), 3u);
  }
  EXPECT_THROW(jsonl::read_all(dir / "missing.jsonl"), Error);
}

TEST(Templates, RenderBracesAndPlaceholders) {
  EXPECT_EQ(templates::render("{{| a |}} {x}", {{"x", "1"}}), "{| a |} 1");
  EXPECT_EQ(templates::render("{{{{Infobox {t}", {{"t", "film"}}), "{{Infobox film");
  try {
    templates::render("{missing}", {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingPlaceholder);
  }
}

TEST(Templates, PublishedInstructionsPresent) {
  EXPECT_NE(templates::kAnswerTemplate.find("answer the following question **concisely**"), std::string_view::npos);
  EXPECT_NE(templates::kJudgeTemplate.find("2 - The answer aligns with both"), std::string_view::npos);
  for (auto tpl : {templates::kTableFree, templates::kKgFree, templates::kInfoboxFree, templates::kTableConstrained,
                   templates::kKgConstrained, templates::kInfoboxConstrained}) {
    // every converter template renders with its own placeholders
    EXPECT_NO_THROW(templates::render(tpl, {{"claim_text", "c"}, {"evidence_text", "e"}, {"nums", "4"}}));
    EXPECT_EQ(tpl.find("\\#"), std::string_view::npos);
  }
}

TEST(FormatKind, ParseAndLabels) {
  EXPECT_EQ(parse_format_kind("KGs"), FormatKind::KG);
  EXPECT_EQ(parse_format_kind(" infobox "), FormatKind::Infobox);
  EXPECT_THROW(parse_format_kind("csv"), Error);
  EXPECT_EQ(format_pair_label(FormatKind::Table, FormatKind::Text), "tables vs texts");
  EXPECT_EQ(format_pair_label(FormatKind::Text, FormatKind::KG), "texts vs KGs");
}
