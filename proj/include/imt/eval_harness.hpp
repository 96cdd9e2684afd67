#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/engine.hpp"
#include "imt/error.hpp"
#include "imt/utf8.hpp"

namespace imt {

using TestSet = std::vector<std::pair<std::string, std::string>>;

struct BleuStats {
  std::size_t correct[4] = {0, 0, 0, 0};
  std::size_t total[4] = {0, 0, 0, 0};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  // multi-bleu.perl: a zero n-gram precision contributes log = -9999999999.
  double score() const {
    if (hyp_length == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
      const double p = total[n] ? static_cast<double>(correct[n]) / total[n] : 0.0;
      log_sum += p > 0.0 ? std::log(p) : -9999999999.0;
    }
    double bp = 1.0;
    if (hyp_length < ref_length) {
      bp = std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
    }
    return 100.0 * bp * std::exp(log_sum / 4.0);
  }
};

inline BleuStats bleu_stats(const std::vector<std::string>& hypotheses,
                            const std::vector<std::string>& references) {
  if (hypotheses.empty() || hypotheses.size() != references.size()) {
    throw Error(ErrorCode::invalid_argument,
                "BLEU needs equally many (>= 1) hypotheses and references");
  }
  BleuStats stats;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = utf8::split_words(hypotheses[s]);
    const auto ref = utf8::split_words(references[s]);
    stats.hyp_length += hyp.size();
    stats.ref_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) {
        ++ref_counts[{ref.begin() + static_cast<std::ptrdiff_t>(i),
                      ref.begin() + static_cast<std::ptrdiff_t>(i + n)}];
      }
      std::map<std::vector<std::string>, std::size_t> hyp_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        ++hyp_counts[{hyp.begin() + static_cast<std::ptrdiff_t>(i),
                      hyp.begin() + static_cast<std::ptrdiff_t>(i + n)}];
        ++stats.total[n - 1];
      }
      for (const auto& [gram, c] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) stats.correct[n - 1] += std::min(c, it->second);
      }
    }
  }
  return stats;
}

// Case-sensitive corpus BLEU-4 on whitespace tokens, scaled to [0, 100].
inline double corpus_bleu(const std::vector<std::string>& hypotheses,
                          const std::vector<std::string>& references) {
  return bleu_stats(hypotheses, references).score();
}

// Engine view used by the dynamic metrics. Words are surface words.
class ImtPredictor {
 public:
  virtual ~ImtPredictor() = default;

  // Up to `max_words` words continuing `locked`. With a non-empty
  // `dangling`, the first word is the completion of the unfinished word.
  virtual std::vector<std::string> predict(const std::string& source,
                                           const std::vector<std::string>& locked,
                                           const std::string& dangling,
                                           std::size_t max_words) = 0;

  // Every displayed candidate (inline prediction first), each cut to `n` words.
  virtual std::vector<std::vector<std::string>> suggestions(
      const std::string& source, const std::vector<std::string>& locked, std::size_t n) {
    return {predict(source, locked, "", n)};
  }
};

struct NgramAccuracy {
  std::size_t hits = 0;
  std::size_t total = 0;
  std::size_t failures = 0;
  std::vector<std::string> errors;

  double value() const { return total ? static_cast<double>(hits) / total : 0.0; }
};

// Locks every reference word prefix and checks the next `n` predicted words.
// The denominator is sum over references of max(L - n + 1, 0).
inline NgramAccuracy ngram_accuracy(ImtPredictor& predictor, const TestSet& test_set,
                                    std::size_t n, bool any_suggestion = false) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "N must be >= 1");
  NgramAccuracy acc;
  for (const auto& [source, reference] : test_set) {
    const auto words = utf8::split_words(reference);
    if (words.size() < n) continue;
    for (std::size_t t = 0; t + n <= words.size(); ++t) {
      ++acc.total;
      const std::vector<std::string> locked(words.begin(),
                                            words.begin() + static_cast<std::ptrdiff_t>(t));
      const std::vector<std::string> expected(words.begin() + static_cast<std::ptrdiff_t>(t),
                                              words.begin() + static_cast<std::ptrdiff_t>(t + n));
      try {
        std::vector<std::vector<std::string>> candidates;
        if (any_suggestion) {
          candidates = predictor.suggestions(source, locked, n);
        } else {
          candidates.push_back(predictor.predict(source, locked, "", n));
        }
        for (auto& c : candidates) {
          if (c.size() > n) c.resize(n);
          if (c == expected) {
            ++acc.hits;
            break;
          }
        }
      } catch (const std::exception& e) {
        ++acc.failures;
        acc.errors.push_back(source + " @" + std::to_string(t) + ": " + e.what());
      }
    }
  }
  return acc;
}

enum class EditPolicy { accept_prefix, type_through };

inline EditPolicy edit_policy_from_string(std::string_view s) {
  if (s == "accept_prefix") return EditPolicy::accept_prefix;
  if (s == "type_through") return EditPolicy::type_through;
  throw Error(ErrorCode::invalid_argument, "unknown policy: " + std::string(s));
}

struct KeystrokeReport {
  std::size_t typed = 0;       // characters typed, spaces included
  std::size_t accepts = 0;     // TAB presses, one keystroke each
  std::size_t reference_chars = 0;

  std::size_t keystrokes() const { return typed + accepts; }
  double savings() const {
    return reference_chars
               ? 1.0 - static_cast<double>(keystrokes()) / static_cast<double>(reference_chars)
               : 0.0;
  }
};

// Simulated translator. Under accept_prefix it takes the longest correct
// run of predicted words with one TAB, otherwise types the next character
// of the first wrong word and asks again. A fully typed word is closed with
// a space (none after the last word). type_through ignores the engine.
inline KeystrokeReport simulate_post_edit(ImtPredictor& predictor, const TestSet& test_set,
                                          EditPolicy policy) {
  if (test_set.empty()) throw Error(ErrorCode::invalid_argument, "empty test set");
  KeystrokeReport report;
  for (const auto& [source, reference] : test_set) {
    const auto normalized = utf8::normalize_whitespace(reference);
    const auto words = utf8::split_words(normalized);
    report.reference_chars += utf8::length(normalized);
    if (policy == EditPolicy::type_through) {
      report.typed += utf8::length(normalized);
      continue;
    }
    std::size_t k = 0;
    std::vector<char32_t> typed_chars;
    while (k < words.size()) {
      const std::vector<std::string> locked(words.begin(),
                                            words.begin() + static_cast<std::ptrdiff_t>(k));
      std::vector<std::string> prediction;
      try {
        prediction =
            predictor.predict(source, locked, utf8::encode(typed_chars), words.size() - k);
      } catch (const std::exception&) {
        prediction.clear();
      }
      std::size_t m = 0;
      while (m < prediction.size() && k + m < words.size() && prediction[m] == words[k + m]) ++m;
      if (m > 0) {
        ++report.accepts;
        k += m;
        typed_chars.clear();
        continue;
      }
      const auto target = utf8::decode(words[k]);
      if (typed_chars.size() < target.size()) {
        typed_chars.push_back(target[typed_chars.size()]);
        ++report.typed;
        continue;
      }
      if (k + 1 < words.size()) ++report.typed;  // the separating space
      ++k;
      typed_chars.clear();
    }
  }
  return report;
}

// Adapter running the shared Engine with greedy decoding for predictions.
// Source-side work (TM lookup, datastore) is cached per source sentence.
class EnginePredictor : public ImtPredictor {
 public:
  explicit EnginePredictor(Engine engine) : engine_(std::move(engine)) {}

  std::vector<std::string> predict(const std::string& source,
                                   const std::vector<std::string>& locked,
                                   const std::string& dangling, std::size_t max_words) override {
    const auto spec = spec_for(locked, dangling);
    const auto result = engine_.decode(context(source), spec, std::size_t{1});
    auto words = utf8::split_words(continuation_text(result.nbest.front(), engine_.target_vocab()));
    if (words.size() > max_words) words.resize(max_words);
    return words;
  }

  std::vector<std::vector<std::string>> suggestions(const std::string& source,
                                                    const std::vector<std::string>& locked,
                                                    std::size_t n) override {
    std::vector<std::vector<std::string>> out{predict(source, locked, "", n)};
    const auto spec = spec_for(locked, "");
    const auto result = engine_.decode(context(source), spec);
    const auto& vocab = engine_.target_vocab();
    const auto set = build_suggestions(result, engine_.models().lm.get(), vocab, spec, seed_);
    auto cut = [n](std::string text) {
      auto w = utf8::split_words(text);
      if (w.size() > n) w.resize(n);
      return w;
    };
    out.push_back(cut(continuation_text(set.inline_hypothesis, vocab)));
    for (std::size_t r = 1; r < result.nbest.size(); ++r) {
      out.push_back(cut(continuation_text(result.nbest[r], vocab)));
    }
    if (set.lm_suggestion) out.push_back(cut(*set.lm_suggestion));
    return out;
  }

  void set_seed(std::uint64_t seed) { seed_ = seed; }
  const Engine& engine() const noexcept { return engine_; }

 private:
  PrefixSpec spec_for(const std::vector<std::string>& locked, const std::string& dangling) const {
    std::optional<std::string> d;
    if (!dangling.empty()) d = dangling;
    return make_prefix_spec(utf8::join(locked) + (locked.empty() ? "" : " "), d,
                            engine_.target_vocab());
  }

  const SourceContext& context(const std::string& source) {
    auto it = cache_.find(source);
    if (it == cache_.end()) it = cache_.emplace(source, engine_.prepare(source)).first;
    return it->second;
  }

  Engine engine_;
  std::map<std::string, SourceContext> cache_;
  std::uint64_t seed_ = 0;
};

struct EvalReport {
  std::optional<double> bleu;
  std::map<std::size_t, double> ngram_acc;
  std::optional<double> keystroke_savings;
  std::map<std::string, std::size_t> counts;

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    if (bleu) j["bleu"] = *bleu;
    if (!ngram_acc.empty()) {
      nlohmann::json acc = nlohmann::json::object();
      for (const auto& [n, v] : ngram_acc) acc[std::to_string(n)] = v;
      j["ngram_acc"] = acc;
    }
    if (keystroke_savings) j["keystroke_savings"] = *keystroke_savings;
    j["counts"] = counts;
    return j;
  }

  std::string table() const {
    std::string out = "metric                 value\n";
    char buf[96];
    if (bleu) {
      std::snprintf(buf, sizeof buf, "%-22s %8.2f\n", "BLEU", *bleu);
      out += buf;
    }
    for (const auto& [n, v] : ngram_acc) {
      std::snprintf(buf, sizeof buf, "%-22s %8.2f\n", ("Acc_" + std::to_string(n) + "-gram").c_str(),
                    100.0 * v);
      out += buf;
    }
    if (keystroke_savings) {
      std::snprintf(buf, sizeof buf, "%-22s %8.2f\n", "keystroke savings %",
                    100.0 * *keystroke_savings);
      out += buf;
    }
    for (const auto& [name, c] : counts) {
      std::snprintf(buf, sizeof buf, "%-22s %8zu\n", name.c_str(), c);
      out += buf;
    }
    return out;
  }
};

}  // namespace imt
