#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace imt::toy {

using Pairs = std::vector<std::pair<std::string, std::string>>;

// Portable draws: std distributions differ between standard libraries.
inline std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline const std::vector<std::string>& target_nouns() {
  static const std::vector<std::string> words = {
      "valve", "pump",  "seal",  "pipe",  "tank",   "gear",  "bolt",  "nut",
      "ring",  "hose",  "filter", "lever", "spring", "plate", "screw", "cable",
      "motor", "belt",  "shaft", "cover", "frame",  "wheel", "chain", "clamp"};
  return words;
}

// Distinct consonant-vowel source words: "baki", "bako", ...
inline std::vector<std::string> source_words(std::size_t n) {
  static const std::string consonants = "bdgklmnprstvz";
  static const std::string vowels = "aiou";
  std::vector<std::string> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    std::string w;
    w += consonants[i % consonants.size()];
    w += vowels[(i / consonants.size()) % vowels.size()];
    w += consonants[(i * 7 + 3) % consonants.size()];
    w += vowels[(i / 3) % vowels.size()];
    if (i >= consonants.size() * vowels.size()) w += "n";
    out.push_back(w);
  }
  return out;
}

// Monotone one-word-to-one-word sentence pairs over a lexicon.
inline Pairs sample_pairs(std::mt19937_64& rng, const std::vector<std::string>& src,
                          const std::vector<std::string>& tgt, std::size_t count,
                          std::size_t min_len = 3, std::size_t max_len = 6) {
  Pairs out;
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t len = min_len + draw(rng, max_len - min_len + 1);
    std::string a;
    std::string b;
    for (std::size_t w = 0; w < len; ++w) {
      const std::size_t i = draw(rng, src.size());
      a += (w ? " " : "") + src[i];
      b += (w ? " " : "") + tgt[i];
    }
    out.emplace_back(std::move(a), std::move(b));
  }
  return out;
}

// Domain shift: the model trains on lexicon A, while the TM, dev and test
// splits use lexicon B, which swaps the translations of the first
// `swapped_pairs` adjacent word pairs. B's mappings therefore exist only in
// the TM.
struct ShiftCorpus {
  std::vector<std::string> source_lexicon;
  std::vector<std::string> lexicon_a;
  std::vector<std::string> lexicon_b;
  Pairs train;
  Pairs tm;
  Pairs dev;
  Pairs test;
};

inline ShiftCorpus lexicon_shift_corpus(std::uint64_t seed = 7, std::size_t train_size = 400,
                                        std::size_t tm_size = 200, std::size_t dev_size = 40,
                                        std::size_t test_size = 60, std::size_t swapped_pairs = 8) {
  ShiftCorpus c;
  c.lexicon_a = target_nouns();
  c.source_lexicon = source_words(c.lexicon_a.size());
  c.lexicon_b = c.lexicon_a;
  for (std::size_t m = 0; m < swapped_pairs && 2 * m + 1 < c.lexicon_b.size(); ++m) {
    std::swap(c.lexicon_b[2 * m], c.lexicon_b[2 * m + 1]);
  }
  std::mt19937_64 rng(seed);
  c.train = sample_pairs(rng, c.source_lexicon, c.lexicon_a, train_size);
  c.tm = sample_pairs(rng, c.source_lexicon, c.lexicon_b, tm_size);
  c.dev = sample_pairs(rng, c.source_lexicon, c.lexicon_b, dev_size);
  c.test = sample_pairs(rng, c.source_lexicon, c.lexicon_b, test_size);
  return c;
}

// Ambiguous lexicon: each of the first `ambiguous` source words has a
// majority translation (3 of 5 training occurrences) and a minority one.
// Test references pick either translation with equal odds, so the greedy
// prediction misses about half of the ambiguous positions.
struct AmbiguousCorpus {
  Pairs train;
  Pairs test;
};

inline AmbiguousCorpus ambiguous_corpus(std::uint64_t seed = 11, std::size_t train_size = 400,
                                        std::size_t test_size = 40, std::size_t ambiguous = 6) {
  const auto& nouns = target_nouns();
  const std::size_t n = nouns.size() / 2;
  const auto src = source_words(n);
  std::vector<std::string> major(nouns.begin(), nouns.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::string> minor = major;
  for (std::size_t i = 0; i < ambiguous && i < n; ++i) minor[i] = nouns[n + i];

  std::mt19937_64 rng(seed);
  auto make = [&](std::size_t count, bool test) {
    Pairs out;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t len = 3 + draw(rng, 4);
      std::string a;
      std::string b;
      for (std::size_t w = 0; w < len; ++w) {
        const std::size_t i = draw(rng, n);
        const bool use_minor = test ? draw(rng, 2) == 0 : draw(rng, 5) < 2;
        a += (w ? " " : "") + src[i];
        b += (w ? " " : "") + (use_minor ? minor[i] : major[i]);
      }
      out.emplace_back(std::move(a), std::move(b));
    }
    return out;
  };
  AmbiguousCorpus c;
  c.train = make(train_size, false);
  c.test = make(test_size, true);
  return c;
}

// Small parallel corpus rigged so that, after "press flush", the typed
// characters "fo" complete to "for" ahead of "form" and "fox". Each pair is
// repeated so the counts outweigh additive smoothing.
inline Pairs walkthrough_corpus(std::size_t repeats = 20) {
  const Pairs base = {
      {"an chongshui yong O quan", "press flush for O ring"},
      {"chongshui yong O quan", "flush for O ring"},
      {"chongshui yong gongju", "flush for tools"},
      {"chongshui fa", "flush valve"},
      {"chongshui biaodan", "flush form"},
      {"an biaodan", "press form"},
      {"tianxie biaodan", "fill form"},
      {"hu pao", "fox runs"},
      {"an fa", "press valve"},
      {"O quan fa", "O ring valve"},
  };
  Pairs out;
  for (std::size_t r = 0; r < repeats; ++r) out.insert(out.end(), base.begin(), base.end());
  return out;
}

inline constexpr const char* kWalkthroughSource = "an chongshui yong O quan";

}  // namespace imt::toy
