#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/error.hpp"
#include "imt/tokenizer.hpp"

namespace imt {

// Next-token probabilities over the target vocabulary.
struct Distribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  friend bool operator==(const Distribution&, const Distribution&) = default;
};

// Per-step representation used as the kNN key.
struct ModelState {
  std::vector<double> context;
  std::size_t step = 0;
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

struct StepOutput {
  Distribution dist;
  ModelState state;
};

// Top-ranked TM pair handed to the model as extra conditioning.
struct TmContext {
  SubwordSeq retrieved_source;
  SubwordSeq retrieved_target;
  double match_rate = 0.0;
};

struct BatchRequest {
  std::vector<TokenId> source;
  std::vector<TokenId> prefix;
};

// Prefixes aligned on the right by left-padding, so the most recent token of
// every row sits in the last column.
struct PaddedBatch {
  std::size_t width = 0;
  std::vector<TokenId> cells;       // rows * width, row-major
  std::vector<std::size_t> lengths;  // unpadded prefix length per row
  std::vector<std::vector<TokenId>> sources;

  std::size_t rows() const noexcept { return lengths.size(); }
  TokenId at(std::size_t row, std::size_t col) const { return cells[row * width + col]; }
  std::span<const TokenId> prefix(std::size_t row) const {
    const auto* begin = cells.data() + row * width + (width - lengths[row]);
    return {begin, lengths[row]};
  }
};

inline PaddedBatch left_pad(std::span<const BatchRequest> requests, TokenId pad) {
  PaddedBatch b;
  for (const auto& r : requests) b.width = std::max(b.width, r.prefix.size());
  b.cells.assign(requests.size() * b.width, pad);
  for (std::size_t row = 0; row < requests.size(); ++row) {
    const auto& p = requests[row].prefix;
    std::copy(p.begin(), p.end(), b.cells.begin() + static_cast<std::ptrdiff_t>(
                                                        row * b.width + b.width - p.size()));
    b.lengths.push_back(p.size());
    b.sources.push_back(requests[row].source);
  }
  return b;
}

// The contract every decoding feature runs against. Implementations are
// immutable and step() is a pure function of its arguments.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  virtual const Vocabulary& target_vocab() const = 0;
  // Null for target-only models.
  virtual const Vocabulary* source_vocab() const { return nullptr; }
  virtual std::size_t context_dim() const = 0;

  virtual StepOutput step(std::span<const TokenId> source, std::span<const TokenId> prefix,
                          const TmContext* tm) const = 0;

  virtual std::vector<StepOutput> step_batch(const PaddedBatch& batch) const {
    std::vector<StepOutput> out;
    out.reserve(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      out.push_back(step(batch.sources[r], batch.prefix(r), nullptr));
    }
    return out;
  }
};

inline StepOutput model_step(const SequenceModel& model, std::span<const TokenId> source,
                             std::span<const TokenId> prefix, const TmContext* tm = nullptr) {
  return model.step(source, prefix, tm);
}

// Blends a copy distribution over the not-yet-emitted tokens of the retrieved
// target into `base`, weighted by gamma * match_rate.
inline Distribution apply_tm_conditioning(const Distribution& base, const TmContext& tm,
                                          std::span<const TokenId> prefix, double gamma,
                                          const Vocabulary& vocab) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "gamma must be in [0, 1]");
  }
  const double weight = gamma * tm.match_rate;
  if (weight <= 0.0) return base;

  std::map<TokenId, long> remaining;
  for (TokenId id : tm.retrieved_target.ids) {
    if (!vocab.is_special(id)) ++remaining[id];
  }
  for (TokenId id : prefix) {
    auto it = remaining.find(id);
    if (it != remaining.end() && it->second > 0) --it->second;
  }
  long total = 0;
  for (const auto& [id, n] : remaining) total += n;
  if (total == 0) return base;

  Distribution out;
  out.probs.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out.probs[i] = (1.0 - weight) * base.probs[i];
  for (const auto& [id, n] : remaining) {
    if (n > 0 && static_cast<std::size_t>(id) < out.size()) {
      out.probs[static_cast<std::size_t>(id)] +=
          weight * static_cast<double>(n) / static_cast<double>(total);
    }
  }
  double sum = 0.0;
  for (double p : out.probs) sum += p;
  for (double& p : out.probs) p /= sum;
  return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class FeatureTag : std::uint64_t { prev1 = 1, prev2 = 2, source = 3 };

inline void add_hashed_feature(std::vector<double>& vec, std::uint64_t seed, FeatureTag tag,
                               TokenId id, double weight) {
  const std::uint64_t h = splitmix64(
      seed ^ splitmix64((static_cast<std::uint64_t>(tag) << 40) ^ static_cast<std::uint32_t>(id)));
  const std::size_t bucket = static_cast<std::size_t>(h % vec.size());
  vec[bucket] += ((h >> 32) & 1U) ? -weight : weight;
}

// Additively smoothed conditional counts c(context, y).
class CountTable {
 public:
  struct Row {
    std::uint64_t total = 0;
    std::map<TokenId, std::uint64_t> counts;
  };

  void add(TokenId context, TokenId y) {
    auto& row = rows_[context];
    ++row.total;
    ++row.counts[y];
  }

  const Row* row(TokenId context) const {
    auto it = rows_.find(context);
    return it == rows_.end() ? nullptr : &it->second;
  }

  // (c(y) + s) / (total + s * V) over all y.
  static void smoothed(const Row* row, double smoothing, std::size_t vocab_size,
                       std::vector<double>& out) {
    const double total = row ? static_cast<double>(row->total) : 0.0;
    const double denom = total + smoothing * static_cast<double>(vocab_size);
    out.assign(vocab_size, smoothing / denom);
    if (!row) return;
    for (const auto& [y, c] : row->counts) {
      out[static_cast<std::size_t>(y)] = (static_cast<double>(c) + smoothing) / denom;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [ctx, row] : rows_) {
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& [y, c] : row.counts) cells.push_back({y, c});
      rows.push_back({ctx, cells});
    }
    return rows;
  }

  static CountTable from_json(const nlohmann::json& j) {
    CountTable t;
    for (const auto& r : j) {
      auto& row = t.rows_[r.at(0).get<TokenId>()];
      for (const auto& cell : r.at(1)) {
        const auto c = cell.at(1).get<std::uint64_t>();
        row.counts[cell.at(0).get<TokenId>()] = c;
        row.total += c;
      }
    }
    return t;
  }

  const std::map<TokenId, Row>& rows() const noexcept { return rows_; }

 private:
  std::map<TokenId, Row> rows_;
};

// Bigram table with a smoothed unigram fallback for unseen contexts.
class BigramTable {
 public:
  void add(TokenId prev, TokenId y) {
    bigrams_.add(prev, y);
    unigrams_.add(0, y);
  }

  void distribution(TokenId prev, double smoothing, std::size_t vocab_size,
                    std::vector<double>& out) const {
    if (const auto* row = bigrams_.row(prev)) {
      CountTable::smoothed(row, smoothing, vocab_size, out);
    } else {
      CountTable::smoothed(unigrams_.row(0), smoothing, vocab_size, out);
    }
  }

  const CountTable& bigrams() const noexcept { return bigrams_; }
  const CountTable& unigrams() const noexcept { return unigrams_; }

  nlohmann::json to_json() const {
    return {{"bigram", bigrams_.to_json()}, {"unigram", unigrams_.to_json()}};
  }

  static BigramTable from_json(const nlohmann::json& j) {
    BigramTable t;
    t.bigrams_ = CountTable::from_json(j.at("bigram"));
    t.unigrams_ = CountTable::from_json(j.at("unigram"));
    return t;
  }

 private:
  CountTable bigrams_;
  CountTable unigrams_;
};

inline void check_prefix(std::span<const TokenId> prefix, const Vocabulary& vocab) {
  for (TokenId id : prefix) {
    if (!vocab.valid(id)) throw Error(ErrorCode::invalid_argument, "invalid prefix token");
  }
}

inline std::vector<TokenId> with_eos(const SubwordSeq& seq, const Vocabulary& vocab) {
  std::vector<TokenId> ids = seq.ids;
  ids.push_back(vocab.specials().eos);
  return ids;
}

}  // namespace detail

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::uint64_t kDefaultHashSeed = 0x1F0E5EEDULL;

struct LexiconModelConfig {
  double smoothing = 0.1;
  // Weight of the lexicon term; the bigram gets the rest.
  double lexicon_weight = 0.5;
  double tm_gamma = 0.3;
  std::size_t dim = 64;
  std::uint64_t hash_seed = kDefaultHashSeed;
  // Feature weights of the hashed context vector. The aligned source token
  // dominates so that keys with different source words are far apart.
  double source_feature_weight = 2.0;
  double prev_feature_weight = 1.0;
};

// Toy translation model: 0.5 * p_lex(y | diagonally aligned source token)
// + 0.5 * p_bigram(y | previous target token), with optional TM conditioning.
class LexiconModel : public SequenceModel {
 public:
  LexiconModel(std::shared_ptr<const Vocabulary> src, std::shared_ptr<const Vocabulary> tgt,
               LexiconModelConfig config)
      : src_(std::move(src)), tgt_(std::move(tgt)), config_(config) {
    if (!src_ || !tgt_) throw Error(ErrorCode::invalid_argument, "vocabularies required");
    if (config_.dim == 0) throw Error(ErrorCode::invalid_argument, "dim must be >= 1");
  }

  const Vocabulary& target_vocab() const override { return *tgt_; }
  const Vocabulary* source_vocab() const override { return src_.get(); }
  std::shared_ptr<const Vocabulary> source_vocab_ptr() const { return src_; }
  std::shared_ptr<const Vocabulary> target_vocab_ptr() const { return tgt_; }
  std::size_t context_dim() const override { return config_.dim; }
  const LexiconModelConfig& config() const noexcept { return config_; }
  double length_ratio() const noexcept { return length_ratio_; }

  // Source position aligned to target step t, or the source </s> once the
  // diagonal runs past the end of the source.
  TokenId aligned_source(std::span<const TokenId> source, std::size_t t) const {
    const auto j = static_cast<std::size_t>(std::floor(static_cast<double>(t) * length_ratio_));
    if (j >= source.size()) return src_->specials().eos;
    return source[j];
  }

  StepOutput step(std::span<const TokenId> source, std::span<const TokenId> prefix,
                  const TmContext* tm) const override {
    detail::check_prefix(prefix, *tgt_);
    const TokenId bos = tgt_->specials().bos;
    const std::size_t t = prefix.size();
    const TokenId prev1 = t >= 1 ? prefix[t - 1] : bos;
    const TokenId prev2 = t >= 2 ? prefix[t - 2] : bos;
    StepOutput out = step_core(aligned_source(source, t), prev1, prev2, t);
    if (tm && config_.tm_gamma > 0.0) {
      out.dist = apply_tm_conditioning(out.dist, *tm, prefix, config_.tm_gamma, *tgt_);
    }
    return out;
  }

  // Reads the last two real tokens of each row straight from the rightmost
  // columns; cells left of a row's length are padding and never read.
  std::vector<StepOutput> step_batch(const PaddedBatch& batch) const override {
    std::vector<StepOutput> out;
    out.reserve(batch.rows());
    const TokenId bos = tgt_->specials().bos;
    const std::size_t w = batch.width;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      const std::size_t len = batch.lengths[r];
      for (std::size_t c = w - len; c < w; ++c) {
        if (!tgt_->valid(batch.at(r, c))) {
          throw Error(ErrorCode::invalid_argument, "invalid prefix token");
        }
      }
      const TokenId prev1 = len >= 1 ? batch.at(r, w - 1) : bos;
      const TokenId prev2 = len >= 2 ? batch.at(r, w - 2) : bos;
      out.push_back(step_core(aligned_source(batch.sources[r], len), prev1, prev2, len));
    }
    return out;
  }

  std::vector<double> context_vector(TokenId aligned, TokenId prev1, TokenId prev2) const {
    std::vector<double> v(config_.dim, 0.0);
    detail::add_hashed_feature(v, config_.hash_seed, detail::FeatureTag::prev1, prev1,
                               config_.prev_feature_weight);
    detail::add_hashed_feature(v, config_.hash_seed, detail::FeatureTag::prev2, prev2,
                               config_.prev_feature_weight);
    detail::add_hashed_feature(v, config_.hash_seed, detail::FeatureTag::source, aligned,
                               config_.source_feature_weight);
    return v;
  }

  const detail::CountTable& lexicon() const noexcept { return lexicon_; }
  const detail::BigramTable& bigram() const noexcept { return bigram_; }

  nlohmann::json to_json() const {
    return {{"format_version", kModelFormatVersion},
            {"kind", "lexicon"},
            {"source_vocab_size", src_->size()},
            {"target_vocab_size", tgt_->size()},
            {"smoothing", config_.smoothing},
            {"lexicon_weight", config_.lexicon_weight},
            {"tm_gamma", config_.tm_gamma},
            {"dim", config_.dim},
            {"hash_seed", config_.hash_seed},
            {"source_feature_weight", config_.source_feature_weight},
            {"prev_feature_weight", config_.prev_feature_weight},
            {"length_ratio", length_ratio_},
            {"lexicon", lexicon_.to_json()},
            {"bigram", bigram_.to_json()}};
  }

  static LexiconModel from_json(const nlohmann::json& j, std::shared_ptr<const Vocabulary> src,
                                std::shared_ptr<const Vocabulary> tgt) {
    try {
      if (j.at("format_version").get<int>() != kModelFormatVersion ||
          j.at("kind").get<std::string>() != "lexicon") {
        throw Error(ErrorCode::invalid_argument, "unsupported model artifact");
      }
      if (j.at("source_vocab_size").get<std::size_t>() != src->size() ||
          j.at("target_vocab_size").get<std::size_t>() != tgt->size()) {
        throw Error(ErrorCode::invalid_argument, "model/vocabulary size mismatch");
      }
      LexiconModelConfig c;
      c.smoothing = j.at("smoothing").get<double>();
      c.lexicon_weight = j.at("lexicon_weight").get<double>();
      c.tm_gamma = j.at("tm_gamma").get<double>();
      c.dim = j.at("dim").get<std::size_t>();
      c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
      c.source_feature_weight = j.at("source_feature_weight").get<double>();
      c.prev_feature_weight = j.at("prev_feature_weight").get<double>();
      LexiconModel m(std::move(src), std::move(tgt), c);
      m.length_ratio_ = j.at("length_ratio").get<double>();
      m.lexicon_ = detail::CountTable::from_json(j.at("lexicon"));
      m.bigram_ = detail::BigramTable::from_json(j.at("bigram"));
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_argument, std::string("malformed model: ") + e.what());
    }
  }

  friend LexiconModel build_lexicon_model(
      const std::vector<std::pair<std::string, std::string>>& corpus,
      std::shared_ptr<const Vocabulary> src, std::shared_ptr<const Vocabulary> tgt,
      LexiconModelConfig config);

 private:
  StepOutput step_core(TokenId aligned, TokenId prev1, TokenId prev2, std::size_t t) const {
    const std::size_t v = tgt_->size();
    std::vector<double> lex;
    std::vector<double> bi;
    detail::CountTable::smoothed(lexicon_.row(aligned), config_.smoothing, v, lex);
    bigram_.distribution(prev1, config_.smoothing, v, bi);
    StepOutput out;
    out.dist.probs.resize(v);
    const double a = config_.lexicon_weight;
    for (std::size_t i = 0; i < v; ++i) out.dist.probs[i] = a * lex[i] + (1.0 - a) * bi[i];
    out.state.context = context_vector(aligned, prev1, prev2);
    out.state.step = t;
    return out;
  }

  std::shared_ptr<const Vocabulary> src_;
  std::shared_ptr<const Vocabulary> tgt_;
  LexiconModelConfig config_;
  double length_ratio_ = 1.0;
  detail::CountTable lexicon_;
  detail::BigramTable bigram_;
};

// Counts diagonal-alignment lexicon pairs and target bigrams (including the
// final </s>) over a tokenized parallel corpus.
inline LexiconModel build_lexicon_model(
    const std::vector<std::pair<std::string, std::string>>& corpus,
    std::shared_ptr<const Vocabulary> src, std::shared_ptr<const Vocabulary> tgt,
    LexiconModelConfig config = {}) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  if (!(config.smoothing > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "smoothing must be positive");
  }
  LexiconModel m(src, tgt, config);
  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> tokenized;
  std::size_t src_tokens = 0;
  std::size_t tgt_tokens = 0;
  for (const auto& [s, t] : corpus) {
    auto si = tokenize(s, *src).ids;
    auto ti = tokenize(t, *tgt).ids;
    src_tokens += si.size();
    tgt_tokens += ti.size();
    tokenized.emplace_back(std::move(si), std::move(ti));
  }
  m.length_ratio_ =
      tgt_tokens == 0 ? 1.0 : static_cast<double>(src_tokens) / static_cast<double>(tgt_tokens);
  const TokenId eos = tgt->specials().eos;
  const TokenId bos = tgt->specials().bos;
  for (const auto& [si, ti] : tokenized) {
    for (std::size_t t = 0; t <= ti.size(); ++t) {
      const TokenId y = t < ti.size() ? ti[t] : eos;
      m.lexicon_.add(m.aligned_source(si, t), y);
      m.bigram_.add(t == 0 ? bos : ti[t - 1], y);
    }
  }
  return m;
}

struct BigramLmConfig {
  double smoothing = 0.1;
  std::size_t dim = 64;
  std::uint64_t hash_seed = kDefaultHashSeed;
};

// Target-only bigram LM; the source argument of step() is ignored.
class BigramLm : public SequenceModel {
 public:
  BigramLm(std::shared_ptr<const Vocabulary> vocab, BigramLmConfig config)
      : vocab_(std::move(vocab)), config_(config) {
    if (!vocab_) throw Error(ErrorCode::invalid_argument, "vocabulary required");
  }

  const Vocabulary& target_vocab() const override { return *vocab_; }
  std::size_t context_dim() const override { return config_.dim; }
  const BigramLmConfig& config() const noexcept { return config_; }
  const detail::BigramTable& table() const noexcept { return table_; }

  StepOutput step(std::span<const TokenId>, std::span<const TokenId> prefix,
                  const TmContext*) const override {
    detail::check_prefix(prefix, *vocab_);
    const TokenId bos = vocab_->specials().bos;
    const std::size_t t = prefix.size();
    const TokenId prev1 = t >= 1 ? prefix[t - 1] : bos;
    const TokenId prev2 = t >= 2 ? prefix[t - 2] : bos;
    StepOutput out;
    table_.distribution(prev1, config_.smoothing, vocab_->size(), out.dist.probs);
    out.state.context.assign(config_.dim, 0.0);
    detail::add_hashed_feature(out.state.context, config_.hash_seed, detail::FeatureTag::prev1,
                               prev1, 1.0);
    detail::add_hashed_feature(out.state.context, config_.hash_seed, detail::FeatureTag::prev2,
                               prev2, 1.0);
    out.state.step = t;
    return out;
  }

  nlohmann::json to_json() const {
    return {{"format_version", kModelFormatVersion},
            {"kind", "bigram_lm"},
            {"vocab_size", vocab_->size()},
            {"smoothing", config_.smoothing},
            {"dim", config_.dim},
            {"hash_seed", config_.hash_seed},
            {"table", table_.to_json()}};
  }

  static BigramLm from_json(const nlohmann::json& j, std::shared_ptr<const Vocabulary> vocab) {
    try {
      if (j.at("format_version").get<int>() != kModelFormatVersion ||
          j.at("kind").get<std::string>() != "bigram_lm") {
        throw Error(ErrorCode::invalid_argument, "unsupported LM artifact");
      }
      if (j.at("vocab_size").get<std::size_t>() != vocab->size()) {
        throw Error(ErrorCode::invalid_argument, "LM/vocabulary size mismatch");
      }
      BigramLmConfig c;
      c.smoothing = j.at("smoothing").get<double>();
      c.dim = j.at("dim").get<std::size_t>();
      c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
      BigramLm lm(std::move(vocab), c);
      lm.table_ = detail::BigramTable::from_json(j.at("table"));
      return lm;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_argument, std::string("malformed LM: ") + e.what());
    }
  }

  friend BigramLm build_toy_lm(const std::vector<std::string>& corpus,
                               std::shared_ptr<const Vocabulary> vocab, BigramLmConfig config);

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  BigramLmConfig config_;
  detail::BigramTable table_;
};

inline BigramLm build_toy_lm(const std::vector<std::string>& corpus,
                             std::shared_ptr<const Vocabulary> vocab, BigramLmConfig config = {}) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  BigramLm lm(vocab, config);
  const TokenId bos = vocab->specials().bos;
  const TokenId eos = vocab->specials().eos;
  for (const auto& sentence : corpus) {
    const auto ids = tokenize(sentence, *vocab).ids;
    for (std::size_t t = 0; t <= ids.size(); ++t) {
      lm.table_.add(t == 0 ? bos : ids[t - 1], t < ids.size() ? ids[t] : eos);
    }
  }
  return lm;
}

}  // namespace imt
