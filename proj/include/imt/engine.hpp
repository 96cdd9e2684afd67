#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/decoder.hpp"
#include "imt/error.hpp"
#include "imt/io.hpp"
#include "imt/knn_augment.hpp"
#include "imt/model_core.hpp"
#include "imt/suggest.hpp"
#include "imt/termbase.hpp"
#include "imt/tm_index.hpp"
#include "imt/tokenizer.hpp"

namespace imt {

enum class EngineKind { plain, tm_conditioned, knn };

inline const char* to_string(EngineKind k) {
  switch (k) {
    case EngineKind::plain: return "plain";
    case EngineKind::tm_conditioned: return "tm_conditioned";
    case EngineKind::knn: return "knn";
  }
  return "plain";
}

inline EngineKind engine_kind_from_string(std::string_view s) {
  if (s == "plain") return EngineKind::plain;
  if (s == "tm" || s == "tm_conditioned") return EngineKind::tm_conditioned;
  if (s == "knn") return EngineKind::knn;
  throw Error(ErrorCode::invalid_argument, "unknown engine: " + std::string(s));
}

inline constexpr double kEngineLengthNormAlpha = 1.5;

struct EngineSettings {
  EngineKind engine = EngineKind::plain;
  double min_match_rate = 0.7;
  KnnConfig knn;
  // Match-rate floor for the kNN pool; tau does the noise filtering there.
  double knn_pool_min_match_rate = 0.0;
  std::size_t knn_pool_size = kKnnPoolSize;
  // The toy model keeps some end-of-sentence mass at every step, so the
  // engine normalizes length harder than the decoder's default.
  BeamConfig beam{4, 128, kEngineLengthNormAlpha};
  double highlight_threshold = kHighlightThreshold;

  void validate() const {
    if (!(min_match_rate >= 0.0 && min_match_rate <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "min_match_rate must be in [0, 1]");
    }
    if (!(knn_pool_min_match_rate >= 0.0 && knn_pool_min_match_rate <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "knn_pool_min_match_rate must be in [0, 1]");
    }
    if (knn_pool_size < 1 || knn_pool_size > kKnnPoolSize) {
      throw Error(ErrorCode::invalid_argument, "knn_pool_size must be in [1, 16]");
    }
    if (beam.beam < 1) throw Error(ErrorCode::invalid_argument, "beam must be >= 1");
    if (beam.max_len < 2) throw Error(ErrorCode::invalid_argument, "max_len must be >= 2");
    if (!(beam.length_norm_alpha >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "length_norm_alpha must be >= 0");
    }
    if (!(highlight_threshold >= 0.0 && highlight_threshold <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "highlight_threshold must be in [0, 1]");
    }
    knn.validate();
  }
};

inline nlohmann::json to_json(const EngineSettings& s) {
  return {{"engine", to_string(s.engine)},
          {"min_match_rate", s.min_match_rate},
          {"knn", to_json(s.knn)},
          {"knn_pool_min_match_rate", s.knn_pool_min_match_rate},
          {"knn_pool_size", s.knn_pool_size},
          {"beam", s.beam.beam},
          {"max_len", s.beam.max_len},
          {"length_norm_alpha", s.beam.length_norm_alpha},
          {"highlight_threshold", s.highlight_threshold}};
}

// Applies the fields present in `j` on top of `base` and validates.
inline EngineSettings engine_settings_from_json(const nlohmann::json& j, EngineSettings base = {}) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "settings must be an object");
    if (j.contains("engine")) base.engine = engine_kind_from_string(j.at("engine").get<std::string>());
    if (j.contains("min_match_rate")) base.min_match_rate = j.at("min_match_rate").get<double>();
    if (j.contains("knn")) base.knn = knn_config_from_json(j.at("knn"), base.knn);
    if (j.contains("knn_pool_min_match_rate")) {
      base.knn_pool_min_match_rate = j.at("knn_pool_min_match_rate").get<double>();
    }
    if (j.contains("knn_pool_size")) base.knn_pool_size = j.at("knn_pool_size").get<std::size_t>();
    if (j.contains("beam")) base.beam.beam = j.at("beam").get<std::size_t>();
    if (j.contains("max_len")) base.beam.max_len = j.at("max_len").get<std::size_t>();
    if (j.contains("length_norm_alpha")) {
      base.beam.length_norm_alpha = j.at("length_norm_alpha").get<double>();
    }
    if (j.contains("highlight_threshold")) {
      base.highlight_threshold = j.at("highlight_threshold").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed settings: ") + e.what());
  }
  base.validate();
  return base;
}

// Vocabularies plus the translation model and (optionally) the LM.
struct ModelBundle {
  std::shared_ptr<const Vocabulary> source_vocab;
  std::shared_ptr<const Vocabulary> target_vocab;
  std::shared_ptr<const LexiconModel> mt;
  std::shared_ptr<const BigramLm> lm;

  static constexpr const char* kSourceVocabFile = "vocab.src.json";
  static constexpr const char* kTargetVocabFile = "vocab.tgt.json";
  static constexpr const char* kModelFile = "model.json";
  static constexpr const char* kLmFile = "lm.json";

  static ModelBundle train(const std::vector<std::pair<std::string, std::string>>& parallel,
                           const std::vector<std::string>& mono, std::size_t merges,
                           LexiconModelConfig mt_config = {}, BigramLmConfig lm_config = {}) {
    std::vector<std::string> src_side;
    std::vector<std::string> tgt_side;
    for (const auto& [s, t] : parallel) {
      src_side.push_back(s);
      tgt_side.push_back(t);
    }
    std::vector<std::string> tgt_corpus = tgt_side;
    tgt_corpus.insert(tgt_corpus.end(), mono.begin(), mono.end());
    ModelBundle b;
    b.source_vocab = std::make_shared<const Vocabulary>(train_bpe(src_side, merges));
    b.target_vocab = std::make_shared<const Vocabulary>(train_bpe(tgt_corpus, merges));
    b.mt = std::make_shared<const LexiconModel>(
        build_lexicon_model(parallel, b.source_vocab, b.target_vocab, mt_config));
    b.lm = std::make_shared<const BigramLm>(
        build_toy_lm(mono.empty() ? tgt_side : mono, b.target_vocab, lm_config));
    return b;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    io::write_file(dir / kSourceVocabFile, source_vocab->to_json().dump(1) + "\n");
    io::write_file(dir / kTargetVocabFile, target_vocab->to_json().dump(1) + "\n");
    io::write_file(dir / kModelFile, mt->to_json().dump(1) + "\n");
    if (lm) io::write_file(dir / kLmFile, lm->to_json().dump(1) + "\n");
  }

  static ModelBundle load(const std::filesystem::path& dir) {
    auto parse = [](const std::filesystem::path& p) {
      try {
        return nlohmann::json::parse(io::read_file(p));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_argument, p.string() + ": " + e.what());
      }
    };
    ModelBundle b;
    b.source_vocab =
        std::make_shared<const Vocabulary>(Vocabulary::from_json(parse(dir / kSourceVocabFile)));
    b.target_vocab =
        std::make_shared<const Vocabulary>(Vocabulary::from_json(parse(dir / kTargetVocabFile)));
    b.mt = std::make_shared<const LexiconModel>(
        LexiconModel::from_json(parse(dir / kModelFile), b.source_vocab, b.target_vocab));
    if (std::filesystem::exists(dir / kLmFile)) {
      b.lm = std::make_shared<const BigramLm>(
          BigramLm::from_json(parse(dir / kLmFile), b.target_vocab));
    }
    return b;
  }
};

// Everything derived from the source sentence once per request.
struct SourceContext {
  std::vector<TokenId> source_ids;
  std::optional<MatchResult> tm_match;
  std::optional<TmContext> tm_context;
  std::shared_ptr<const KnnDatastore> datastore;
};

struct Completion {
  PrefixSpec spec;
  DecodeResult result;
  SuggestionSet suggestions;
  std::optional<MatchResult> tm_match;
  std::vector<TermHit> terms;
};

// One request's view of the engine: models, a settings snapshot and the
// project stores. Cheap to construct; never mutates the stores.
class Engine {
 public:
  Engine(ModelBundle models, EngineSettings settings, const TmStore* tm = nullptr,
         const Termbase* termbase = nullptr)
      : models_(std::move(models)), settings_(std::move(settings)), tm_(tm), termbase_(termbase) {
    if (!models_.mt) throw Error(ErrorCode::invalid_argument, "engine needs a translation model");
    settings_.validate();
  }

  const EngineSettings& settings() const noexcept { return settings_; }
  const ModelBundle& models() const noexcept { return models_; }
  const Vocabulary& target_vocab() const { return *models_.target_vocab; }

  SourceContext prepare(std::string_view source) const {
    SourceContext ctx;
    ctx.source_ids = tokenize(source, *models_.source_vocab).ids;
    if (!tm_) return ctx;
    ctx.tm_match = tm_->best_match(source, settings_.min_match_rate);
    if (settings_.engine == EngineKind::tm_conditioned && ctx.tm_match) {
      TmContext c;
      c.retrieved_source = tokenize(ctx.tm_match->entry.source, *models_.source_vocab);
      c.retrieved_target = tokenize(ctx.tm_match->entry.target, *models_.target_vocab);
      c.match_rate = ctx.tm_match->match_rate;
      ctx.tm_context = std::move(c);
    } else if (settings_.engine == EngineKind::knn) {
      const auto pool =
          tm_->retrieve_pool(source, settings_.knn_pool_size, settings_.knn_pool_min_match_rate);
      std::vector<TmEntry> entries;
      for (const auto& m : pool) entries.push_back(m.entry);
      ctx.datastore = std::make_shared<const KnnDatastore>(build_datastore(*models_.mt, entries));
    }
    return ctx;
  }

  DecodeResult decode(const SourceContext& ctx, const PrefixSpec& spec,
                      std::optional<std::size_t> beam_override = std::nullopt) const {
    BeamConfig beam = settings_.beam;
    if (beam_override) beam.beam = *beam_override;
    beam.max_len = std::max(beam.max_len, spec.locked.size() + 2 * ctx.source_ids.size() + 8);
    const TmContext* tm = ctx.tm_context ? &*ctx.tm_context : nullptr;
    if (settings_.engine == EngineKind::knn && ctx.datastore) {
      return beam_decode(knn_step_fn(*models_.mt, *ctx.datastore, settings_.knn, ctx.source_ids, tm),
                         target_vocab(), spec, beam);
    }
    return beam_decode(model_step_fn(*models_.mt, ctx.source_ids, tm), target_vocab(), spec, beam);
  }

  std::string translate(std::string_view source) const {
    const auto result = decode(prepare(source), PrefixSpec{});
    return continuation_text(result.nbest.front(), target_vocab());
  }

  Completion complete(std::string_view source, std::string_view locked_text,
                      std::optional<std::string> dangling, std::uint64_t seed) const {
    Completion c;
    c.spec = make_prefix_spec(locked_text, std::move(dangling), target_vocab());
    const auto ctx = prepare(source);
    c.tm_match = ctx.tm_match;
    c.result = decode(ctx, c.spec);
    SuggestConfig sc;
    sc.highlight_threshold = settings_.highlight_threshold;
    c.suggestions = build_suggestions(c.result, models_.lm.get(), target_vocab(), c.spec, seed, sc);
    if (termbase_) c.terms = termbase_->find_terms(source);
    return c;
  }

 private:
  ModelBundle models_;
  EngineSettings settings_;
  const TmStore* tm_;
  const Termbase* termbase_;
};

inline nlohmann::json to_json(const MatchResult& m) {
  return {{"entry", to_json(m.entry)},
          {"match_rate", m.match_rate},
          {"coarse_score", m.coarse_score}};
}

inline nlohmann::json to_json(const Hypothesis& h, const Vocabulary& vocab) {
  nlohmann::json tokens = nlohmann::json::array();
  for (TokenId id : h.tokens) tokens.push_back(vocab.entry(id));
  return {{"tokens", tokens},
          {"ids", h.tokens},
          {"detok", detokenize(h.tokens, vocab)},
          {"continuation", continuation_text(h, vocab)},
          {"probs", h.per_token_prob},
          {"score", h.score},
          {"finished", h.finished},
          {"locked_len", h.locked_len}};
}

inline nlohmann::json to_json(const DecodeResult& r, const Vocabulary& vocab) {
  nlohmann::json nbest = nlohmann::json::array();
  for (const auto& h : r.nbest) nbest.push_back(to_json(h, vocab));
  nlohmann::json j = {{"nbest", nbest},
                      {"completion_end", r.completion_end},
                      {"fallback", r.fallback}};
  if (r.completed_word) j["completed_word"] = *r.completed_word;
  return j;
}

inline nlohmann::json to_json(const SuggestionSet& s, const Vocabulary& vocab) {
  nlohmann::json j = {{"inline", continuation_text(s.inline_hypothesis, vocab)},
                      {"alternates", s.alternates},
                      {"highlight_len", s.highlight_len}};
  if (s.lm_suggestion) j["lm_suggestion"] = *s.lm_suggestion;
  return j;
}

inline nlohmann::json to_json(const Completion& c, const Vocabulary& vocab) {
  nlohmann::json j = to_json(c.result, vocab);
  j["suggestions"] = to_json(c.suggestions, vocab);
  j["highlight_len"] = c.suggestions.highlight_len;
  j["tm_match"] = c.tm_match ? to_json(*c.tm_match) : nlohmann::json(nullptr);
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : c.terms) {
    terms.push_back({{"entry", to_json(t.entry)}, {"offset", t.offset}});
  }
  j["terms"] = terms;
  return j;
}

}  // namespace imt
