#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "imt/decoder.hpp"
#include "imt/suggest.hpp"
#include "support/fixtures.hpp"

namespace imt {
namespace {

// Step function returning a fixed distribution, regardless of prefix.
struct FixedStep {
  Distribution dist;
  Distribution operator()(std::span<const TokenId>) const { return dist; }
};

std::set<std::string> set_bits(const HitVector& h, const Vocabulary& v) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h.bits[i]) out.insert(v.entry(static_cast<TokenId>(i)));
  }
  return out;
}

TEST(HitVector, FoMatchesForFormFox) {
  const Vocabulary v({"for", "form", "fox", "bar", "flush", "f", "##o", "##or"});
  const auto hit = build_hit_vector(v, "fo");
  EXPECT_EQ(set_bits(hit, v), (std::set<std::string>{"for", "form", "fox"}));
  EXPECT_EQ(hit.size(), v.size());
}

TEST(HitVector, ReflexiveOnFullEntry) {
  const Vocabulary v({"for", "form", "fox", "bar"});
  EXPECT_EQ(set_bits(build_hit_vector(v, "for"), v), (std::set<std::string>{"for", "form"}));
}

TEST(HitVector, UnmatchableIsAllZero) {
  const Vocabulary v({"for", "bar"});
  EXPECT_EQ(build_hit_vector(v, "zz").count(), 0u);
}

TEST(HitVector, ContinuationPieceMatchesContinuationEntries) {
  const Vocabulary v({"bar", "##m", "##mo", "m", "mo"});
  // "barm": "bar" is forced, the open tail "m" is a continuation piece.
  EXPECT_EQ(set_bits(build_hit_vector(v, "barm"), v), (std::set<std::string>{"##m", "##mo"}));
}

TEST(HitVector, MatchesBruteForceScan) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::set<std::string> words;
    while (words.size() < 500) {
      auto w = testing::random_word(rng, "abcd", 1, 6);
      words.insert(rng() % 3 == 0 ? "##" + w : w);
    }
    const Vocabulary v(std::vector<std::string>(words.begin(), words.end()));
    for (int q = 0; q < 50; ++q) {
      const auto piece = testing::random_word(rng, "abcd", 1, 3);
      const bool cont = rng() % 2;
      const auto hit = hit_vector_for_piece(v, piece, cont);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        const bool expected = !v.is_special(id) && v.is_continuation(id) == cont &&
                              v.surface(id).rfind(piece, 0) == 0;
        ASSERT_EQ(hit.test(id), expected) << piece << " vs " << v.entry(id);
      }
    }
  }
}

TEST(CompleteCurrentWord, SingleBitWinsRegardlessOfDistribution) {
  const Vocabulary v({"for", "form", "fox"});
  HitVector hit;
  hit.bits.assign(v.size(), 0);
  hit.bits[6] = 1;  // fox
  FixedStep step{{{0.0, 0.0, 0.0, 0.0, 0.9, 0.09, 0.01}}};
  const auto c = complete_current_word(step, {}, hit);
  EXPECT_FALSE(c.fallback);
  EXPECT_EQ(c.token, 6);
  EXPECT_DOUBLE_EQ(c.probability, 0.01);
}

TEST(CompleteCurrentWord, PicksMostProbableHit) {
  const Vocabulary v({"for", "form", "fox", "bar"});
  FixedStep step{{{0.0, 0.0, 0.0, 0.0, 0.5, 0.3, 0.1, 0.1}}};
  const auto c = complete_current_word(step, {}, build_hit_vector(v, "fo"));
  EXPECT_EQ(v.entry(c.token), "for");
  EXPECT_DOUBLE_EQ(c.probability, 0.5);
}

TEST(CompleteCurrentWord, AllZeroHitFallsBack) {
  const Vocabulary v({"for", "z", "##q"});
  FixedStep step{{{0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0}}};
  HitVector none;
  none.bits.assign(v.size(), 0);
  EXPECT_TRUE(complete_current_word(step, {}, none).fallback);

  PrefixSpec spec;
  spec.dangling = "zq";
  const auto r = beam_decode(step, v, spec);
  // "zq": "z" is forced and "##q" is an open continuation tail with zero mass.
  EXPECT_TRUE(r.fallback);
  ASSERT_TRUE(r.completed_word.has_value());
  EXPECT_EQ(*r.completed_word, "zq");
  for (const auto& h : r.nbest) {
    EXPECT_EQ(std::vector<TokenId>(h.tokens.begin(), h.tokens.begin() + 2),
              tokenize("zq", v).ids);
  }
}

TEST(BeamDecode, Preconditions) {
  const Vocabulary v({"a"});
  FixedStep step{{{0.0, 0.0, 0.5, 0.0, 0.5}}};
  EXPECT_THROW(beam_decode(step, v, PrefixSpec{}, BeamConfig{0, 10, 0.6}), Error);
  PrefixSpec spec;
  spec.locked = {4, 4, 4};
  EXPECT_THROW(beam_decode(step, v, spec, BeamConfig{4, 3, 0.6}), Error);
  spec.locked = {42};
  EXPECT_THROW(beam_decode(step, v, spec), Error);
  EXPECT_THROW(make_prefix_spec("a", std::string("b c"), v), Error);
}

TEST(BeamDecode, IdenticalPairsCorpus) {
  const auto models = ModelBundle::train({{"a b", "A B"}, {"a b", "A B"}}, {}, 10);
  const auto src = tokenize("a b", *models.source_vocab).ids;
  for (std::size_t beam : {1u, 4u}) {
    const auto r = beam_decode(model_step_fn(*models.mt, src), *models.target_vocab, PrefixSpec{},
                               BeamConfig{beam, 16, 0.6});
    EXPECT_EQ(continuation_text(r.nbest.front(), *models.target_vocab), "A B");
    EXPECT_TRUE(r.nbest.front().finished);
  }
}

class ShiftDecodeTest : public ::testing::Test {
 protected:
  const ModelBundle& models = testing::shift_models();
  const toy::ShiftCorpus corpus = toy::lexicon_shift_corpus();
};

TEST_F(ShiftDecodeTest, ForcedDecodeIdentity) {
  for (std::size_t s = 0; s < 20; ++s) {
    const auto& [source, reference] = corpus.test[s];
    const auto src = tokenize(source, *models.source_vocab).ids;
    const auto ref = tokenize(reference, *models.target_vocab).ids;
    PrefixSpec spec;
    spec.locked = ref;
    const auto r = beam_decode(model_step_fn(*models.mt, src), *models.target_vocab, spec,
                               BeamConfig{4, ref.size() + 1, 0.6});
    double teacher = 0.0;
    std::vector<double> probs;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      const auto d = models.mt->step(src, std::span<const TokenId>(ref.data(), t), nullptr).dist;
      probs.push_back(d.probs[static_cast<std::size_t>(ref[t])]);
      teacher += std::log(probs.back());
    }
    for (const auto& h : r.nbest) {
      ASSERT_EQ(h.tokens.size(), ref.size() + 1);
      EXPECT_EQ(std::vector<TokenId>(h.tokens.begin(), h.tokens.end() - 1), ref);
      EXPECT_EQ(std::vector<double>(h.per_token_prob.begin(), h.per_token_prob.end() - 1), probs);
      EXPECT_NEAR(h.score - std::log(h.per_token_prob.back()), teacher, 1e-6);
      EXPECT_EQ(detokenize(std::span<const TokenId>(h.tokens).first(ref.size()),
                           *models.target_vocab),
                reference);
    }
  }
}

TEST_F(ShiftDecodeTest, PrefixFidelityScoreIdentityAndRankOrder) {
  std::mt19937_64 rng(6);
  for (std::size_t s = 0; s < 20; ++s) {
    const auto& [source, reference] = corpus.test[s];
    const auto src = tokenize(source, *models.source_vocab).ids;
    const auto words = utf8::split_words(reference);
    const std::size_t k = rng() % words.size();
    std::string locked = utf8::join(words, 0, k);
    if (k) locked += " ";
    std::optional<std::string> dangling;
    if (rng() % 2) dangling = words[k].substr(0, 1 + rng() % words[k].size());
    const auto spec = make_prefix_spec(locked, dangling, *models.target_vocab);
    const auto r = beam_decode(model_step_fn(*models.mt, src), *models.target_vocab, spec,
                               BeamConfig{4, 64, 1.5});
    ASSERT_FALSE(r.nbest.empty());
    for (std::size_t i = 0; i < r.nbest.size(); ++i) {
      const auto& h = r.nbest[i];
      EXPECT_EQ(std::vector<TokenId>(h.tokens.begin(),
                                     h.tokens.begin() + static_cast<std::ptrdiff_t>(spec.locked.size())),
                spec.locked);
      EXPECT_EQ(h.per_token_prob.size(), h.tokens.size());
      double s_log = 0;
      for (double p : h.per_token_prob) s_log += std::log(p);
      EXPECT_NEAR(h.score, s_log, 1e-6);
      if (i > 0) EXPECT_GE(normalized_score(r.nbest[i - 1], 1.5), normalized_score(h, 1.5));
    }
    if (dangling) {
      ASSERT_TRUE(r.completed_word.has_value());
      if (!r.fallback) EXPECT_EQ(r.completed_word->rfind(*dangling, 0), 0u);
    }
  }
}

TEST(BeamDecode, WalkthroughCompletesFor) {
  const auto& models = testing::walkthrough_models();
  const auto src = tokenize(toy::kWalkthroughSource, *models.source_vocab).ids;
  const auto spec = make_prefix_spec("press flush ", std::string("fo"), *models.target_vocab);
  const auto r = beam_decode(model_step_fn(*models.mt, src), *models.target_vocab, spec,
                             BeamConfig{4, 64, 1.5});
  ASSERT_TRUE(r.completed_word.has_value());
  EXPECT_EQ(*r.completed_word, "for");
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(continuation_text(r.nbest.front(), *models.target_vocab), "for O ring");
}

TEST(Sampling, TopOneIsGreedy) {
  const auto& models = testing::walkthrough_models();
  const auto& lm = *models.lm;
  const auto spec = make_prefix_spec("press", std::nullopt, *models.target_vocab);
  // "press" is dangling here: the sampler completes it through the Hit Vector.
  SampleConfig sc;
  sc.k = 1;
  sc.words = 4;
  const auto h = topk_sample_decode(model_step_fn(lm, {}), *models.target_vocab, spec, sc);
  std::vector<TokenId> greedy = spec.locked;
  auto step = model_step_fn(lm, {});
  // Greedy oracle: argmax at every step, Hit Vector for the first.
  const auto hit = build_hit_vector(*models.target_vocab, "press");
  greedy.push_back(complete_current_word(step, greedy, hit).token);
  std::size_t words = 1;
  while (greedy.size() < 60) {
    const auto d = step(greedy);
    const auto next = detail::argmax_generatable(d, *models.target_vocab);
    if (next == models.target_vocab->specials().eos) {
      greedy.push_back(next);
      break;
    }
    if (!models.target_vocab->is_continuation(next) && words == 4) break;
    if (!models.target_vocab->is_continuation(next)) ++words;
    greedy.push_back(next);
  }
  EXPECT_EQ(h.tokens, greedy);
}

TEST(Sampling, SeedDeterminism) {
  const auto& models = testing::walkthrough_models();
  const auto spec = make_prefix_spec("", std::nullopt, *models.target_vocab);
  SampleConfig sc;
  sc.seed = 17;
  const auto a = topk_sample_decode(model_step_fn(*models.lm, {}), *models.target_vocab, spec, sc);
  const auto b = topk_sample_decode(model_step_fn(*models.lm, {}), *models.target_vocab, spec, sc);
  EXPECT_EQ(a.tokens, b.tokens);
}

TEST(Sampling, FrequenciesMatchRenormalizedTopK) {
  const Vocabulary v({"a", "b", "c", "d", "e"});
  const Distribution d{{0.0, 0.0, 0.05, 0.05, 0.4, 0.25, 0.15, 0.07, 0.03}};
  // Top-3 generatable: a (0.4), b (0.25), c (0.15); eos (0.05) ranks below.
  std::mt19937_64 rng(123);
  std::map<TokenId, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sample_topk(d, 3, rng, v)];
  const double z = 0.8;
  const std::map<TokenId, double> expected = {{4, 0.4 / z}, {5, 0.25 / z}, {6, 0.15 / z}};
  int total = 0;
  for (const auto& [id, c] : counts) {
    ASSERT_TRUE(expected.count(id)) << id;
    total += c;
  }
  EXPECT_EQ(total, n);
  for (const auto& [id, p] : expected) {
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(counts[id], n * p, 3 * sigma);
  }
}

TEST(BatchStep, EqualsUnbatched) {
  const auto& models = testing::shift_models();
  const auto corpus = toy::lexicon_shift_corpus();
  std::vector<BatchRequest> reqs;
  for (std::size_t len : {2u, 5u, 7u}) {
    BatchRequest r;
    r.source = tokenize(corpus.test[len].first, *models.source_vocab).ids;
    auto tgt = tokenize(corpus.test[len].second + " " + corpus.test[len + 1].second,
                        *models.target_vocab).ids;
    tgt.resize(len);
    r.prefix = tgt;
    reqs.push_back(r);
  }
  reqs.push_back(reqs[1]);
  const auto out = batch_step(*models.mt, reqs);
  ASSERT_EQ(out.size(), reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(out[i].probs, models.mt->step(reqs[i].source, reqs[i].prefix, nullptr).dist.probs);
  }
  EXPECT_EQ(out[1].probs, out[3].probs);
  const std::vector<BatchRequest> one = {reqs[0]};
  EXPECT_EQ(batch_step(*models.mt, one)[0].probs, out[0].probs);
  EXPECT_THROW(batch_step(*models.mt, std::vector<BatchRequest>{}), Error);
}

TEST(Highlight, Examples) {
  Hypothesis h;
  h.per_token_prob = {0.9, 0.7, 0.5, 0.8};
  EXPECT_EQ(highlight_span(h, 0), 2u);
  EXPECT_EQ(highlight_span(h, 3), 1u);
  EXPECT_EQ(highlight_span(h, 4), 0u);
  EXPECT_THROW(highlight_span(h, 5), Error);
  h.per_token_prob = {0.6, 0.6};
  EXPECT_EQ(highlight_span(h, 0), 0u);
  h.per_token_prob = {1.0, 1.0, 1.0};
  EXPECT_EQ(highlight_span(h, 0), 3u);
}

}  // namespace
}  // namespace imt
