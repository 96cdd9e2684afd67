#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imt/error.hpp"
#include "imt/model_core.hpp"
#include "imt/tokenizer.hpp"
#include "imt/utf8.hpp"

namespace imt {

// A per-step distribution source: maps a target prefix to the next-token
// distribution. Models, kNN-augmented models and test doubles all fit.
template <class F>
concept StepFunction = requires(F f, std::span<const TokenId> prefix) {
  { f(prefix) } -> std::convertible_to<Distribution>;
};

inline auto model_step_fn(const SequenceModel& model, std::span<const TokenId> source,
                          const TmContext* tm = nullptr) {
  return [&model, source, tm](std::span<const TokenId> prefix) {
    return model.step(source, prefix, tm).dist;
  };
}

// Confirmed target tokens plus the characters of an unfinished word.
struct PrefixSpec {
  std::vector<TokenId> locked;
  std::optional<std::string> dangling;
};

// Builds a PrefixSpec from editor text. Without an explicit `dangling`, a
// locked text that does not end in whitespace has its last word split off as
// the dangling piece.
inline PrefixSpec make_prefix_spec(std::string_view locked_text,
                                   std::optional<std::string> dangling, const Vocabulary& vocab) {
  PrefixSpec spec;
  std::string locked(locked_text);
  if (dangling) {
    for (char32_t cp : utf8::decode(*dangling)) {
      if (utf8::is_space(cp)) {
        throw Error(ErrorCode::invalid_argument, "dangling text must not contain whitespace");
      }
    }
    if (!dangling->empty()) spec.dangling = std::move(dangling);
  } else if (last_piece_is_dangling(locked)) {
    auto words = utf8::split_words(locked);
    spec.dangling = words.back();
    words.pop_back();
    locked = utf8::join(words);
  }
  spec.locked = tokenize(locked, vocab).ids;
  return spec;
}

struct HitVector {
  std::vector<std::uint8_t> bits;

  std::size_t size() const noexcept { return bits.size(); }
  bool test(TokenId id) const { return bits.at(static_cast<std::size_t>(id)) != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
};

// Marks entries of the given positional class whose surface starts with
// `piece`.
inline HitVector hit_vector_for_piece(const Vocabulary& vocab, std::string_view piece,
                                      bool continuation) {
  HitVector hit;
  hit.bits.assign(vocab.size(), 0);
  if (piece.empty()) return hit;
  for (TokenId id : vocab.ids_with_prefix(piece, continuation)) {
    hit.bits[static_cast<std::size_t>(id)] = 1;
  }
  return hit;
}

// Hit Vector for the open tail of the dangling word (see encode_partial_word).
inline HitVector build_hit_vector(const Vocabulary& vocab, std::string_view dangling) {
  const auto partial = encode_partial_word(vocab, dangling);
  return hit_vector_for_piece(vocab, partial.tail, partial.tail_is_continuation);
}

struct WordCompletion {
  TokenId token = -1;
  double probability = 0.0;
  bool fallback = false;
};

// Highest-probability token among the Hit Vector's set bits, reported with
// its unmasked probability. Falls back when no set bit carries mass.
template <StepFunction StepFn>
WordCompletion complete_current_word(StepFn&& step, std::span<const TokenId> prefix,
                                     const HitVector& hit) {
  const Distribution dist = step(prefix);
  WordCompletion best;
  best.fallback = true;
  for (std::size_t i = 0; i < dist.size() && i < hit.size(); ++i) {
    if (!hit.bits[i] || !(dist.probs[i] > 0.0)) continue;
    if (best.fallback || dist.probs[i] > best.probability) {
      best = {static_cast<TokenId>(i), dist.probs[i], false};
    }
  }
  return best;
}

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
  std::vector<double> per_token_prob;
  bool finished = false;
  // Number of leading tokens that came from the locked prefix.
  std::size_t locked_len = 0;

  std::span<const TokenId> continuation() const {
    return std::span<const TokenId>(tokens).subspan(std::min(locked_len, tokens.size()));
  }
};

// GNMT length penalty.
inline double normalized_score(const Hypothesis& h, double alpha) {
  const double lp = std::pow((5.0 + static_cast<double>(h.tokens.size())) / 6.0, alpha);
  return h.score / lp;
}

struct DecodeResult {
  std::vector<Hypothesis> nbest;
  std::optional<std::string> completed_word;
  bool fallback = false;
  // Token index just past the completed dangling word (or the locked prefix).
  std::size_t completion_end = 0;
};

struct BeamConfig {
  std::size_t beam = 4;
  std::size_t max_len = 128;
  double length_norm_alpha = 0.6;
};

namespace detail {

inline bool generatable(const Vocabulary& vocab, TokenId id) {
  const auto& sp = vocab.specials();
  return id != sp.pad && id != sp.bos && id != sp.unk;
}

inline void push_token(Hypothesis& h, TokenId id, double p) {
  h.tokens.push_back(id);
  h.per_token_prob.push_back(p);
  h.score += std::log(p);
}

template <class StepFn>
void force(StepFn& step, Hypothesis& h, std::span<const TokenId> ids, const Vocabulary& vocab) {
  for (TokenId id : ids) {
    if (!vocab.valid(id)) throw Error(ErrorCode::invalid_argument, "invalid prefix token");
    const Distribution dist = step(std::span<const TokenId>(h.tokens));
    push_token(h, id, dist.probs[static_cast<std::size_t>(id)]);
  }
}

inline TokenId argmax_generatable(const Distribution& dist, const Vocabulary& vocab) {
  TokenId best = -1;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (!generatable(vocab, id)) continue;
    if (best < 0 || dist.probs[i] > dist.probs[static_cast<std::size_t>(best)]) best = id;
  }
  return best;
}

}  // namespace detail

// Subword-prefix decoding: force the locked tokens, complete the dangling
// word through the Hit Vector, then continue with ordinary beam search.
template <StepFunction StepFn>
DecodeResult beam_decode(StepFn&& step, const Vocabulary& vocab, const PrefixSpec& spec,
                         const BeamConfig& config = {}) {
  if (config.beam < 1) throw Error(ErrorCode::invalid_argument, "beam must be >= 1");
  if (config.max_len <= spec.locked.size()) {
    throw Error(ErrorCode::invalid_argument, "max_len must exceed the locked prefix");
  }
  const TokenId eos = vocab.specials().eos;
  DecodeResult result;

  Hypothesis base;
  base.locked_len = spec.locked.size();
  detail::force(step, base, spec.locked, vocab);

  if (spec.dangling) {
    const auto partial = encode_partial_word(vocab, *spec.dangling);
    const HitVector hit = hit_vector_for_piece(vocab, partial.tail, partial.tail_is_continuation);
    Hypothesis trial = base;
    detail::force(step, trial, partial.forced, vocab);
    WordCompletion completion;
    completion.fallback = true;
    if (hit.count() > 0) completion = complete_current_word(step, trial.tokens, hit);
    if (!completion.fallback) {
      detail::push_token(trial, completion.token, completion.probability);
      // Finish the word greedily while a continuation piece is the argmax.
      while (trial.tokens.size() < config.max_len) {
        const Distribution dist = step(std::span<const TokenId>(trial.tokens));
        const TokenId next = detail::argmax_generatable(dist, vocab);
        if (next < 0 || next == eos || !vocab.is_continuation(next)) break;
        detail::push_token(trial, next, dist.probs[static_cast<std::size_t>(next)]);
      }
      base = std::move(trial);
    } else {
      result.fallback = true;
      detail::force(step, base, tokenize(*spec.dangling, vocab).ids, vocab);
    }
    result.completed_word = detokenize(
        std::span<const TokenId>(base.tokens).subspan(spec.locked.size()), vocab);
  }
  result.completion_end = base.tokens.size();

  std::vector<Hypothesis> active{std::move(base)};
  std::vector<Hypothesis> finished;
  struct Candidate {
    double score;
    std::size_t parent;
    TokenId token;
    double prob;
  };
  const double alpha = config.length_norm_alpha;
  // Scores only fall as hypotheses grow, so score / lp(max_len) bounds the
  // normalized score any extension of an active hypothesis can reach.
  const double lp_max = std::pow((5.0 + static_cast<double>(config.max_len)) / 6.0, alpha);
  auto settled = [&] {
    if (finished.size() < config.beam) return false;
    std::vector<double> done;
    for (const auto& h : finished) done.push_back(normalized_score(h, alpha));
    std::nth_element(done.begin(), done.begin() + static_cast<std::ptrdiff_t>(config.beam - 1),
                     done.end(), std::greater<>());
    const double kth = done[config.beam - 1];
    for (const auto& h : active) {
      if (h.score / lp_max > kth) return false;
    }
    return true;
  };
  while (!active.empty() && active.front().tokens.size() < config.max_len && !settled()) {
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < active.size(); ++p) {
      const Distribution dist = step(std::span<const TokenId>(active[p].tokens));
      std::vector<TokenId> ids;
      for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        if (detail::generatable(vocab, id) && dist.probs[i] > 0.0) ids.push_back(id);
      }
      const std::size_t keep = std::min(config.beam, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                        [&](TokenId a, TokenId b) {
                          const double pa = dist.probs[static_cast<std::size_t>(a)];
                          const double pb = dist.probs[static_cast<std::size_t>(b)];
                          return pa != pb ? pa > pb : a < b;
                        });
      for (std::size_t i = 0; i < keep; ++i) {
        const double prob = dist.probs[static_cast<std::size_t>(ids[i])];
        candidates.push_back({active[p].score + std::log(prob), p, ids[i], prob});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Hypothesis> next;
    for (std::size_t rank = 0; rank < candidates.size() && next.size() < config.beam; ++rank) {
      const auto& c = candidates[rank];
      Hypothesis h = active[c.parent];
      h.tokens.push_back(c.token);
      h.per_token_prob.push_back(c.prob);
      h.score = c.score;
      if (c.token == eos) {
        if (rank < config.beam) {
          h.finished = true;
          finished.push_back(std::move(h));
        }
        continue;
      }
      next.push_back(std::move(h));
    }
    active = std::move(next);
  }

  result.nbest = finished.empty() ? std::move(active) : std::move(finished);
  std::stable_sort(result.nbest.begin(), result.nbest.end(),
                   [alpha](const Hypothesis& a, const Hypothesis& b) {
                     return normalized_score(a, alpha) > normalized_score(b, alpha);
                   });
  if (result.nbest.size() > config.beam) result.nbest.resize(config.beam);
  return result;
}

// Draws from the k most probable admissible tokens, renormalized. `mask`,
// when non-null, zeroes tokens whose bit is unset before truncation.
template <class Rng>
TokenId sample_topk(const Distribution& dist, std::size_t k, Rng& rng, const Vocabulary& vocab,
                    const HitVector* mask = nullptr) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (!detail::generatable(vocab, id) || !(dist.probs[i] > 0.0)) continue;
    if (mask && !mask->bits[i]) continue;
    ids.push_back(id);
  }
  if (ids.empty()) return -1;
  const std::size_t keep = std::min(std::max<std::size_t>(k, 1), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    [&](TokenId a, TokenId b) {
                      const double pa = dist.probs[static_cast<std::size_t>(a)];
                      const double pb = dist.probs[static_cast<std::size_t>(b)];
                      return pa != pb ? pa > pb : a < b;
                    });
  ids.resize(keep);
  double total = 0.0;
  for (TokenId id : ids) total += dist.probs[static_cast<std::size_t>(id)];
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * total;
  double acc = 0.0;
  for (TokenId id : ids) {
    acc += dist.probs[static_cast<std::size_t>(id)];
    if (u < acc) return id;
  }
  return ids.back();
}

struct SampleConfig {
  std::size_t k = 10;
  std::size_t words = 4;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 48;
};

// Top-k sampling continuation of `spec` that stops after `words` complete
// surface words (the completed dangling word counts as one) or at </s>.
template <StepFunction StepFn>
Hypothesis topk_sample_decode(StepFn&& step, const Vocabulary& vocab, const PrefixSpec& spec,
                              const SampleConfig& config) {
  std::mt19937_64 rng(config.seed);
  const TokenId eos = vocab.specials().eos;
  Hypothesis h;
  h.locked_len = spec.locked.size();
  detail::force(step, h, spec.locked, vocab);

  std::size_t words_started = 0;
  std::size_t generated = 0;
  if (spec.dangling) {
    const auto partial = encode_partial_word(vocab, *spec.dangling);
    const HitVector hit = hit_vector_for_piece(vocab, partial.tail, partial.tail_is_continuation);
    Hypothesis trial = h;
    detail::force(step, trial, partial.forced, vocab);
    TokenId pick = -1;
    Distribution dist;
    if (hit.count() > 0) {
      dist = step(std::span<const TokenId>(trial.tokens));
      pick = sample_topk(dist, config.k, rng, vocab, &hit);
    }
    if (pick >= 0) {
      detail::push_token(trial, pick, dist.probs[static_cast<std::size_t>(pick)]);
      h = std::move(trial);
    } else {
      detail::force(step, h, tokenize(*spec.dangling, vocab).ids, vocab);
    }
    words_started = 1;
    generated = h.tokens.size() - h.locked_len;
  }

  while (generated < config.max_new_tokens) {
    const Distribution dist = step(std::span<const TokenId>(h.tokens));
    const TokenId next = sample_topk(dist, config.k, rng, vocab);
    if (next < 0) break;
    const double p = dist.probs[static_cast<std::size_t>(next)];
    if (next == eos) {
      detail::push_token(h, next, p);
      h.finished = true;
      break;
    }
    const bool starts_word = !vocab.is_continuation(next);
    if (starts_word && words_started == config.words) break;
    detail::push_token(h, next, p);
    if (starts_word) ++words_started;
    ++generated;
  }
  return h;
}

// Left-pads the prefixes of a batch and steps them together. Each output is
// bitwise-identical to the unbatched call.
inline std::vector<Distribution> batch_step(const SequenceModel& model,
                                            std::span<const BatchRequest> requests) {
  if (requests.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  const PaddedBatch batch = left_pad(requests, model.target_vocab().specials().pad);
  auto outputs = model.step_batch(batch);
  std::vector<Distribution> out;
  out.reserve(outputs.size());
  for (auto& o : outputs) out.push_back(std::move(o.dist));
  return out;
}

inline constexpr double kHighlightThreshold = 0.6;

// Length of the run of tokens from `start` whose probability stays strictly
// above `threshold`.
inline std::size_t highlight_span(const Hypothesis& h, std::size_t start,
                                  double threshold = kHighlightThreshold) {
  if (start > h.per_token_prob.size()) {
    throw Error(ErrorCode::invalid_argument, "highlight start out of range");
  }
  std::size_t n = 0;
  for (std::size_t i = start; i < h.per_token_prob.size() && h.per_token_prob[i] > threshold; ++i) {
    ++n;
  }
  return n;
}

}  // namespace imt
