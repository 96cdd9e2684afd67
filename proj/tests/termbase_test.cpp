#include <gtest/gtest.h>

#include <random>
#include <tuple>

#include "imt/termbase.hpp"
#include "support/fixtures.hpp"

namespace imt {
namespace {

TEST(Termbase, FindsSingleTerm) {
  Termbase tb;
  ASSERT_TRUE(tb.add("flush valve", "Spülventil"));
  const auto hits = tb.find_terms("open the flush valve now");
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].entry.target_term, "Spülventil");
  EXPECT_EQ(hits[0].offset, 9u);
}

TEST(Termbase, TermOccurringTwice) {
  Termbase tb;
  tb.add("valve", "Ventil");
  const auto hits = tb.find_terms("valve and valve");
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].offset, 0u);
  EXPECT_EQ(hits[1].offset, 10u);
}

TEST(Termbase, OverlappingTermsLongestFirst) {
  Termbase tb;
  tb.add("valve", "Ventil");
  tb.add("flush valve", "Spülventil");
  tb.add("flush", "spülen");
  const auto hits = tb.find_terms("flush valve");
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].entry.source_term, "flush valve");
  EXPECT_EQ(hits[1].entry.source_term, "flush");
  EXPECT_EQ(hits[2].entry.source_term, "valve");
  EXPECT_EQ(hits[2].offset, 6u);
}

TEST(Termbase, CaseSensitiveAndCjkOffsets) {
  Termbase tb;
  tb.add("Valve", "Ventil");
  tb.add("水阀", "water valve");
  EXPECT_TRUE(tb.find_terms("valve").empty());
  const auto hits = tb.find_terms("冲水阀");
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].offset, 1u);
}

TEST(Termbase, RejectsEmptyAndDuplicatePairs) {
  Termbase tb;
  EXPECT_TRUE(tb.add("a", "b"));
  EXPECT_FALSE(tb.add("a", "b"));
  EXPECT_FALSE(tb.add("", "b"));
  EXPECT_FALSE(tb.add("a", " "));
  EXPECT_TRUE(tb.add("a", "c"));
  EXPECT_EQ(tb.size(), 2u);
}

TEST(Termbase, MatchesBruteForceScan) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    Termbase tb;
    for (int i = 0; i < 8; ++i) tb.add(testing::random_word(rng, "ab", 1, 3), "t" + std::to_string(i));
    const auto sentence = testing::random_word(rng, "ab ", 0, 20);
    const auto normalized = utf8::normalize_whitespace(sentence);
    std::vector<std::tuple<std::size_t, std::int64_t>> expected;
    for (const auto& e : tb.entries()) {
      for (std::size_t pos = normalized.find(e.source_term); pos != std::string::npos;
           pos = normalized.find(e.source_term, pos + 1)) {
        expected.emplace_back(pos, e.id);
      }
    }
    std::vector<std::tuple<std::size_t, std::int64_t>> got;
    for (const auto& h : tb.find_terms(sentence)) got.emplace_back(h.offset, h.entry.id);
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expected) << sentence;
  }
}

}  // namespace
}  // namespace imt
