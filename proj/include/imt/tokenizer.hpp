#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/error.hpp"
#include "imt/utf8.hpp"

namespace imt {

using TokenId = std::int32_t;

struct SpecialIds {
  TokenId pad = 0;
  TokenId bos = 1;
  TokenId eos = 2;
  TokenId unk = 3;
};

inline constexpr std::string_view kDefaultContinuationMarker = "##";

// Subword vocabulary. Word-internal pieces carry the continuation marker as a
// prefix ("##ow"); word-initial pieces are stored bare ("low"). The first four
// ids are the specials <pad>, <s>, </s>, <unk>.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // `entries` excludes the specials; they are prepended.
  explicit Vocabulary(const std::vector<std::string>& entries,
                      std::string marker = std::string(kDefaultContinuationMarker),
                      std::vector<Merge> merges = {})
      : marker_(std::move(marker)), merges_(std::move(merges)) {
    if (marker_.empty()) {
      throw Error(ErrorCode::invalid_argument, "continuation marker must be non-empty");
    }
    entries_ = {"<pad>", "<s>", "</s>", "<unk>"};
    for (const auto& e : entries) entries_.push_back(e);
    build();
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const SpecialIds& specials() const noexcept { return specials_; }
  const std::string& marker() const noexcept { return marker_; }
  const std::vector<std::string>& entries() const noexcept { return entries_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }

  bool valid(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < entries_.size();
  }

  const std::string& entry(TokenId id) const {
    check(id);
    return entries_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> id_of(std::string_view entry) const {
    auto it = id_of_.find(std::string(entry));
    if (it == id_of_.end()) return std::nullopt;
    return it->second;
  }

  bool is_special(TokenId id) const noexcept {
    return id == specials_.pad || id == specials_.bos || id == specials_.eos ||
           id == specials_.unk;
  }

  bool is_continuation(TokenId id) const {
    check(id);
    return continuation_[static_cast<std::size_t>(id)] != 0;
  }

  // Entry text without the continuation marker; empty for specials.
  const std::string& surface(TokenId id) const {
    check(id);
    return surfaces_[static_cast<std::size_t>(id)];
  }

  // Ids of non-special entries of the given class whose surface starts with
  // `prefix`, in ascending surface order.
  std::vector<TokenId> ids_with_prefix(std::string_view prefix, bool continuation) const {
    const auto& index = continuation ? continuation_index_ : initial_index_;
    std::vector<TokenId> out;
    auto it = std::lower_bound(index.begin(), index.end(), prefix,
                               [this](TokenId id, std::string_view p) {
                                 return std::string_view(surfaces_[id]) < p;
                               });
    for (; it != index.end(); ++it) {
      std::string_view s = surfaces_[*it];
      if (s.substr(0, prefix.size()) != prefix) break;
      out.push_back(*it);
    }
    return out;
  }

  bool has_prefix(std::string_view prefix, bool continuation) const {
    const auto& index = continuation ? continuation_index_ : initial_index_;
    auto it = std::lower_bound(index.begin(), index.end(), prefix,
                               [this](TokenId id, std::string_view p) {
                                 return std::string_view(surfaces_[id]) < p;
                               });
    return it != index.end() &&
           std::string_view(surfaces_[*it]).substr(0, prefix.size()) == prefix;
  }

  std::size_t max_entry_chars() const noexcept { return max_entry_chars_; }

  nlohmann::json to_json() const {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [a, b] : merges_) merges.push_back({a, b});
    return {{"entries", entries_},
            {"specials",
             {{"pad", specials_.pad}, {"bos", specials_.bos}, {"eos", specials_.eos},
              {"unk", specials_.unk}}},
            {"continuation_marker", marker_},
            {"merges", merges}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    try {
      auto entries = j.at("entries").get<std::vector<std::string>>();
      const auto& sp = j.at("specials");
      const SpecialIds expected;
      if (sp.at("pad").get<TokenId>() != expected.pad ||
          sp.at("bos").get<TokenId>() != expected.bos ||
          sp.at("eos").get<TokenId>() != expected.eos ||
          sp.at("unk").get<TokenId>() != expected.unk || entries.size() < 4) {
        throw Error(ErrorCode::invalid_argument, "vocabulary specials must occupy ids 0..3");
      }
      std::vector<Merge> merges;
      if (j.contains("merges")) {
        for (const auto& m : j.at("merges")) {
          merges.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
        }
      }
      entries.erase(entries.begin(), entries.begin() + 4);
      return Vocabulary(entries, j.at("continuation_marker").get<std::string>(),
                        std::move(merges));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_argument, std::string("malformed vocabulary: ") + e.what());
    }
  }

 private:
  void check(TokenId id) const {
    if (!valid(id)) throw Error(ErrorCode::invalid_argument, "id out of range");
  }

  void build() {
    id_of_.clear();
    surfaces_.assign(entries_.size(), {});
    continuation_.assign(entries_.size(), 0);
    initial_index_.clear();
    continuation_index_.clear();
    max_entry_chars_ = 1;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.empty()) throw Error(ErrorCode::invalid_argument, "empty vocabulary entry");
      if (!id_of_.emplace(e, static_cast<TokenId>(i)).second) {
        throw Error(ErrorCode::invalid_argument, "duplicate vocabulary entry: " + e);
      }
      if (i < 4) continue;
      const bool cont = e.size() > marker_.size() && e.compare(0, marker_.size(), marker_) == 0;
      continuation_[i] = cont ? 1 : 0;
      surfaces_[i] = cont ? e.substr(marker_.size()) : e;
      (cont ? continuation_index_ : initial_index_).push_back(static_cast<TokenId>(i));
      max_entry_chars_ = std::max(max_entry_chars_, utf8::length(surfaces_[i]));
    }
    auto by_surface = [this](TokenId a, TokenId b) { return surfaces_[a] < surfaces_[b]; };
    std::sort(initial_index_.begin(), initial_index_.end(), by_surface);
    std::sort(continuation_index_.begin(), continuation_index_.end(), by_surface);
  }

  std::vector<std::string> entries_;
  std::string marker_;
  std::vector<Merge> merges_;
  SpecialIds specials_;
  std::unordered_map<std::string, TokenId> id_of_;
  std::vector<std::string> surfaces_;
  std::vector<std::uint8_t> continuation_;
  std::vector<TokenId> initial_index_;
  std::vector<TokenId> continuation_index_;
  std::size_t max_entry_chars_ = 1;
};

// Token ids plus one [begin, end) id range per surface word.
struct SubwordSeq {
  std::vector<TokenId> ids;
  std::vector<std::pair<std::size_t, std::size_t>> word_spans;

  bool empty() const noexcept { return ids.empty(); }
  std::size_t size() const noexcept { return ids.size(); }

  // Recovers word spans from ids alone: every word-initial piece opens a
  // word. <unk> extends the current word if one is open.
  static SubwordSeq from_ids(std::vector<TokenId> ids, const Vocabulary& vocab) {
    SubwordSeq seq;
    seq.ids = std::move(ids);
    const auto& sp = vocab.specials();
    bool open = false;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      const TokenId id = seq.ids[i];
      if (!vocab.valid(id)) throw Error(ErrorCode::invalid_argument, "id out of range");
      if (id == sp.pad || id == sp.bos || id == sp.eos) {
        open = false;
        continue;
      }
      const bool starts = !open || (id != sp.unk && !vocab.is_continuation(id));
      if (starts) {
        seq.word_spans.emplace_back(i, i + 1);
      } else {
        seq.word_spans.back().second = i + 1;
      }
      open = true;
    }
    return seq;
  }
};

namespace detail {

inline std::string continuation_form(const std::string& marker, const std::string& s) {
  return marker + s;
}

// Greedy longest match of cps[pos..] against entries of one positional class.
// Returns (id, chars consumed) or nullopt.
inline std::optional<std::pair<TokenId, std::size_t>> longest_match(
    const Vocabulary& vocab, const std::vector<char32_t>& cps, std::size_t pos) {
  const bool cont = pos > 0;
  const std::size_t max_len = std::min(vocab.max_entry_chars(), cps.size() - pos);
  for (std::size_t len = max_len; len >= 1; --len) {
    std::string piece = utf8::encode(cps, pos, pos + len);
    if (cont) piece = continuation_form(vocab.marker(), piece);
    if (auto id = vocab.id_of(piece); id && !vocab.is_special(*id)) {
      return std::make_pair(*id, len);
    }
  }
  return std::nullopt;
}

inline void segment_word(const Vocabulary& vocab, std::string_view word,
                         std::vector<TokenId>& out) {
  const auto cps = utf8::decode(word);
  std::size_t pos = 0;
  while (pos < cps.size()) {
    if (auto m = longest_match(vocab, cps, pos)) {
      out.push_back(m->first);
      pos += m->second;
    } else {
      out.push_back(vocab.specials().unk);
      ++pos;
    }
  }
}

}  // namespace detail

// Byte-pair-encoding training over whitespace-split words. Each step merges
// the most frequent adjacent symbol pair; ties go to the lexicographically
// smallest (left, right) pair. Stops early when no pair remains.
inline Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t merges,
                            std::string marker = std::string(kDefaultContinuationMarker)) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& sentence : corpus) {
    for (auto& w : utf8::split_words(sentence)) ++word_freq[w];
  }
  if (word_freq.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");

  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> symbols;
    auto chars = utf8::split_chars(w);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      alphabet.insert(chars[i]);
      symbols.push_back(i == 0 ? chars[i] : detail::continuation_form(marker, chars[i]));
    }
    words.emplace_back(std::move(symbols), f);
  }

  std::set<std::string> base;
  for (const auto& c : alphabet) {
    base.insert(c);
    base.insert(detail::continuation_form(marker, c));
  }

  std::vector<Vocabulary::Merge> merge_list;
  for (std::size_t step = 0; step < merges; ++step) {
    std::map<Vocabulary::Merge, std::size_t> pair_counts;
    for (const auto& [symbols, f] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += f;
      }
    }
    if (pair_counts.empty()) break;
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    const std::string merged = left + right.substr(marker.size());
    merge_list.emplace_back(left, right);
    for (auto& [symbols, f] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(symbols[i]);
        }
      }
      symbols = std::move(next);
    }
  }

  std::vector<std::string> entries(base.begin(), base.end());
  std::set<std::string> seen(base.begin(), base.end());
  for (const auto& [left, right] : merge_list) {
    std::string merged = left + right.substr(marker.size());
    if (seen.insert(merged).second) entries.push_back(std::move(merged));
  }
  return Vocabulary(entries, std::move(marker), std::move(merge_list));
}

// Whitespace pre-tokenization, then greedy longest-match segmentation of each
// word. Characters with no matching entry become <unk>.
inline SubwordSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  SubwordSeq seq;
  for (const auto& word : utf8::split_words(text)) {
    const std::size_t begin = seq.ids.size();
    detail::segment_word(vocab, word, seq.ids);
    seq.word_spans.emplace_back(begin, seq.ids.size());
  }
  return seq;
}

inline std::string detokenize(const SubwordSeq& seq, const Vocabulary& vocab) {
  std::string out;
  for (const auto& [begin, end] : seq.word_spans) {
    std::string word;
    for (std::size_t i = begin; i < end; ++i) {
      if (!vocab.is_special(seq.ids[i])) word += vocab.surface(seq.ids[i]);
    }
    if (word.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

inline std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  return detokenize(SubwordSeq::from_ids({ids.begin(), ids.end()}, vocab), vocab);
}

// True when the user is mid-word: the text is non-empty and does not end in
// whitespace.
inline bool last_piece_is_dangling(std::string_view raw_target) {
  if (raw_target.empty()) return false;
  const auto cps = utf8::decode(raw_target);
  return !utf8::is_space(cps.back());
}

// Segmentation of an incomplete word. Full pieces are matched greedily as in
// tokenize(); as soon as the remaining characters are a prefix of some entry
// of the current positional class they become the open `tail`, which the
// Hit Vector matches against. `tail` is empty when the word ends in an
// unknown character.
struct PartialWord {
  std::vector<TokenId> forced;
  std::string tail;
  bool tail_is_continuation = false;
};

inline PartialWord encode_partial_word(const Vocabulary& vocab, std::string_view word) {
  PartialWord out;
  const auto cps = utf8::decode(word);
  std::size_t pos = 0;
  while (pos < cps.size()) {
    const bool cont = pos > 0;
    std::string rest = utf8::encode(cps, pos);
    if (vocab.has_prefix(rest, cont)) {
      out.tail = std::move(rest);
      out.tail_is_continuation = cont;
      return out;
    }
    if (auto m = detail::longest_match(vocab, cps, pos)) {
      out.forced.push_back(m->first);
      pos += m->second;
    } else {
      out.forced.push_back(vocab.specials().unk);
      ++pos;
    }
  }
  return out;
}

}  // namespace imt
