#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imt/decoder.hpp"
#include "imt/model_core.hpp"
#include "imt/tokenizer.hpp"
#include "imt/utf8.hpp"

namespace imt {

struct SuggestConfig {
  std::size_t max_alternates = 3;
  std::size_t alternate_words = 3;
  std::size_t lm_words = 4;
  // The LM speaks only once the locked prefix has more words than this.
  std::size_t lm_min_prefix_words = 10;
  std::size_t lm_top_k = 10;
  double highlight_threshold = kHighlightThreshold;
};

struct SuggestionSet {
  Hypothesis inline_hypothesis;
  std::vector<std::string> alternates;
  std::optional<std::string> lm_suggestion;
  std::size_t highlight_len = 0;
};

inline std::string first_words(const std::string& text, std::size_t n) {
  return utf8::join(utf8::split_words(text), 0, n);
}

inline std::string continuation_text(const Hypothesis& h, const Vocabulary& vocab) {
  return detokenize(h.continuation(), vocab);
}

inline SuggestionSet build_suggestions(const DecodeResult& result, const SequenceModel* lm,
                                       const Vocabulary& vocab, const PrefixSpec& spec,
                                       std::uint64_t seed, const SuggestConfig& config = {}) {
  if (result.nbest.empty()) throw Error(ErrorCode::invalid_argument, "empty n-best list");
  SuggestionSet out;
  out.inline_hypothesis = result.nbest.front();

  std::vector<std::string> seen{
      first_words(continuation_text(out.inline_hypothesis, vocab), config.alternate_words)};
  for (std::size_t r = 1; r < result.nbest.size() && out.alternates.size() < config.max_alternates;
       ++r) {
    auto alt = first_words(continuation_text(result.nbest[r], vocab), config.alternate_words);
    if (alt.empty() || std::find(seen.begin(), seen.end(), alt) != seen.end()) continue;
    seen.push_back(alt);
    out.alternates.push_back(std::move(alt));
  }

  const auto prefix_words = utf8::split_words(detokenize(spec.locked, vocab)).size();
  if (lm && prefix_words > config.lm_min_prefix_words) {
    SampleConfig sc;
    sc.k = config.lm_top_k;
    sc.words = config.lm_words;
    sc.seed = seed;
    const auto h = topk_sample_decode(model_step_fn(*lm, {}), lm->target_vocab(), spec, sc);
    out.lm_suggestion = first_words(continuation_text(h, lm->target_vocab()), config.lm_words);
  }

  const std::size_t start = std::min(result.completion_end, out.inline_hypothesis.tokens.size());
  out.highlight_len = highlight_span(out.inline_hypothesis, start, config.highlight_threshold);
  return out;
}

}  // namespace imt
