#include <gtest/gtest.h>

#include "imt/utf8.hpp"

namespace imt::utf8 {
namespace {

TEST(Utf8, DecodeEncodeRoundTrip) {
  const std::string s = "flush 冲水阀 é\xF0\x9F\x98\x80";
  const auto cps = decode(s);
  EXPECT_EQ(cps.size(), 12u);
  EXPECT_EQ(cps[6], U'冲');
  EXPECT_EQ(encode(cps), s);
  EXPECT_EQ(length(s), 12u);
}

TEST(Utf8, MalformedBytesBecomeReplacementCharacter) {
  const auto cps = decode("a\xFF" "b");
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[1], U'�');
  const auto truncated = decode("\xE5\x86");
  ASSERT_FALSE(truncated.empty());
  EXPECT_EQ(truncated[0], U'�');
}

TEST(Utf8, EncodeRange) {
  const auto cps = decode("abcdef");
  EXPECT_EQ(encode(cps, 2, 4), "cd");
  EXPECT_EQ(encode(cps, 4), "ef");
}

TEST(Utf8, SplitChars) {
  EXPECT_EQ(split_chars("a冲b"), (std::vector<std::string>{"a", "冲", "b"}));
  EXPECT_TRUE(split_chars("").empty());
}

TEST(Utf8, WhitespaceNormalization) {
  EXPECT_EQ(normalize_whitespace("  press\t flush\n\nfor  "), "press flush for");
  EXPECT_EQ(normalize_whitespace("冲水　阀"), "冲水 阀");
  EXPECT_EQ(normalize_whitespace(" \t "), "");
}

TEST(Utf8, SplitAndJoinWords) {
  const auto words = split_words(" a  bb\tccc ");
  EXPECT_EQ(words, (std::vector<std::string>{"a", "bb", "ccc"}));
  EXPECT_EQ(join(words), "a bb ccc");
  EXPECT_EQ(join(words, 1, 2), "bb");
  EXPECT_EQ(join(words, 2, 99), "ccc");
  EXPECT_TRUE(split_words("").empty());
}

TEST(Utf8, CharacterClasses) {
  EXPECT_TRUE(is_space(U' '));
  EXPECT_TRUE(is_space(U'　'));
  EXPECT_FALSE(is_space(U'a'));
  EXPECT_TRUE(is_cjk(U'冲'));
  EXPECT_FALSE(is_cjk(U'a'));
}

}  // namespace
}  // namespace imt::utf8
