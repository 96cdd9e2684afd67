#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
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

// Unit-cost edit distance over two random-access sequences.
template <class Seq>
std::size_t levenshtein_seq(const Seq& a, const Seq& b) {
  if (a.size() < b.size()) return levenshtein_seq(b, a);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

// Character (code point) edit distance.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein_seq(utf8::decode(a), utf8::decode(b));
}

enum class MatchUnit { characters, words };

// 1 - dist / max(|a|, |b|) over whitespace-normalized strings.
inline double match_rate(std::string_view a, std::string_view b,
                         MatchUnit unit = MatchUnit::characters) {
  const auto na = utf8::normalize_whitespace(a);
  const auto nb = utf8::normalize_whitespace(b);
  std::size_t dist = 0;
  std::size_t longest = 0;
  if (unit == MatchUnit::characters) {
    const auto ca = utf8::decode(na);
    const auto cb = utf8::decode(nb);
    dist = levenshtein_seq(ca, cb);
    longest = std::max(ca.size(), cb.size());
  } else {
    const auto wa = utf8::split_words(na);
    const auto wb = utf8::split_words(nb);
    dist = levenshtein_seq(wa, wb);
    longest = std::max(wa.size(), wb.size());
  }
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(dist) / static_cast<double>(longest);
}

// Terms indexed for coarse retrieval: whitespace words, except that CJK
// characters are indexed one per term.
inline std::vector<std::string> index_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) terms.push_back(std::move(cur));
    cur.clear();
  };
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      flush();
    } else if (utf8::is_cjk(cp)) {
      flush();
      utf8::append(cur, cp);
      flush();
    } else {
      utf8::append(cur, cp);
    }
  }
  flush();
  return terms;
}

enum class TmOrigin { uploaded, online };

inline const char* to_string(TmOrigin o) { return o == TmOrigin::online ? "online" : "uploaded"; }

inline TmOrigin tm_origin_from_string(std::string_view s) {
  if (s == "online") return TmOrigin::online;
  if (s == "uploaded") return TmOrigin::uploaded;
  throw Error(ErrorCode::invalid_argument, "unknown TM origin: " + std::string(s));
}

using TmId = std::int64_t;

struct TmEntry {
  TmId id = 0;
  std::string source;
  std::string target;
  TmOrigin origin = TmOrigin::uploaded;
  std::uint64_t created_seq = 0;

  friend bool operator==(const TmEntry&, const TmEntry&) = default;
};

inline nlohmann::json to_json(const TmEntry& e) {
  return {{"id", e.id},
          {"source", e.source},
          {"target", e.target},
          {"origin", to_string(e.origin)},
          {"created_seq", e.created_seq}};
}

inline TmEntry tm_entry_from_json(const nlohmann::json& j) {
  TmEntry e;
  e.id = j.at("id").get<TmId>();
  e.source = j.at("source").get<std::string>();
  e.target = j.at("target").get<std::string>();
  e.origin = tm_origin_from_string(j.at("origin").get<std::string>());
  e.created_seq = j.at("created_seq").get<std::uint64_t>();
  return e;
}

struct MatchResult {
  TmEntry entry;
  double match_rate = 0.0;
  double coarse_score = 0.0;
};

struct AddResult {
  std::vector<TmId> ids;
  // Indexes into the input list of pairs rejected for an empty side.
  std::vector<std::size_t> skipped;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

inline constexpr std::size_t kCoarsePoolSize = 64;
inline constexpr std::size_t kKnnPoolSize = 16;

// In-memory translation memory with a BM25 inverted index over sources.
// Writers are serialized; readers share the lock.
class TmStore {
 public:
  explicit TmStore(MatchUnit unit = MatchUnit::characters, Bm25Params bm25 = {})
      : unit_(unit), bm25_(bm25) {}

  TmStore(const TmStore&) = delete;
  TmStore& operator=(const TmStore&) = delete;

  AddResult add_entries(std::span<const std::pair<std::string, std::string>> pairs,
                        TmOrigin origin) {
    std::unique_lock lock(mu_);
    AddResult result;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      TmEntry e;
      e.source = utf8::normalize_whitespace(pairs[i].first);
      e.target = utf8::normalize_whitespace(pairs[i].second);
      if (e.source.empty() || e.target.empty()) {
        result.skipped.push_back(i);
        continue;
      }
      e.id = next_id_;
      e.origin = origin;
      e.created_seq = next_seq_;
      result.ids.push_back(e.id);
      insert_locked(std::move(e));
    }
    return result;
  }

  // Re-inserts a persisted entry verbatim (log replay).
  void restore(TmEntry e) {
    std::unique_lock lock(mu_);
    if (entries_.count(e.id)) {
      throw Error(ErrorCode::conflict, "duplicate TM id " + std::to_string(e.id));
    }
    insert_locked(std::move(e));
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  std::vector<TmEntry> entries() const {
    std::shared_lock lock(mu_);
    std::vector<TmEntry> out;
    out.reserve(entries_.size());
    for (const auto& [id, e] : entries_) out.push_back(e);
    return out;
  }

  std::optional<TmEntry> get(TmId id) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  // Sum of posting-list lengths (one posting per distinct term per entry).
  std::size_t posting_count() const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& [term, list] : postings_) n += list.size();
    return n;
  }

  std::vector<std::pair<TmId, std::uint32_t>> postings_for(const std::string& term) const {
    std::shared_lock lock(mu_);
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    std::vector<std::pair<TmId, std::uint32_t>> out;
    for (const auto& p : it->second) out.emplace_back(p.id, p.tf);
    return out;
  }

  MatchUnit match_unit() const noexcept { return unit_; }
  const Bm25Params& bm25() const noexcept { return bm25_; }

  // BM25 ranking of entries sharing at least one term with the query; ties
  // go to the lower id.
  std::vector<MatchResult> coarse_retrieve(std::string_view query,
                                           std::size_t limit = kCoarsePoolSize) const {
    if (limit == 0) throw Error(ErrorCode::invalid_argument, "limit must be >= 1");
    std::shared_lock lock(mu_);
    return coarse_locked(query, limit);
  }

  std::optional<MatchResult> best_match(std::string_view query, double min_match_rate) const {
    auto pool = retrieve_pool(query, 1, min_match_rate);
    if (pool.empty()) return std::nullopt;
    return std::move(pool.front());
  }

  // Coarse candidates reranked by match rate, highest first; ties prefer the
  // freshest entry, then the lower id.
  std::vector<MatchResult> retrieve_pool(std::string_view query, std::size_t max_pool,
                                         double min_match_rate) const {
    if (max_pool == 0) throw Error(ErrorCode::invalid_argument, "max_pool must be >= 1");
    if (!(min_match_rate >= 0.0 && min_match_rate <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "min_match_rate must be in [0, 1]");
    }
    std::shared_lock lock(mu_);
    std::vector<MatchResult> candidates;
    if (entries_.size() <= kCoarsePoolSize) {
      // The coarse stage cannot prune a store this small.
      auto scored = coarse_locked(query, kCoarsePoolSize);
      std::unordered_map<TmId, double> score_of;
      for (const auto& m : scored) score_of[m.entry.id] = m.coarse_score;
      for (const auto& [id, e] : entries_) {
        auto it = score_of.find(id);
        candidates.push_back({e, 0.0, it == score_of.end() ? 0.0 : it->second});
      }
    } else {
      candidates = coarse_locked(query, kCoarsePoolSize);
    }
    const auto nq = utf8::normalize_whitespace(query);
    std::vector<MatchResult> kept;
    for (auto& c : candidates) {
      c.match_rate = match_rate(nq, c.entry.source, unit_);
      if (c.match_rate >= min_match_rate) kept.push_back(std::move(c));
    }
    std::sort(kept.begin(), kept.end(), [](const MatchResult& a, const MatchResult& b) {
      if (a.match_rate != b.match_rate) return a.match_rate > b.match_rate;
      if (a.entry.created_seq != b.entry.created_seq) {
        return a.entry.created_seq > b.entry.created_seq;
      }
      return a.entry.id < b.entry.id;
    });
    if (kept.size() > max_pool) kept.resize(max_pool);
    return kept;
  }

 private:
  struct Posting {
    TmId id;
    std::uint32_t tf;
  };

  void insert_locked(TmEntry e) {
    std::map<std::string, std::uint32_t> tf;
    const auto terms = index_terms(e.source);
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) {
      auto& list = postings_[term];
      Posting p{e.id, count};
      auto pos = std::lower_bound(list.begin(), list.end(), e.id,
                                  [](const Posting& a, TmId id) { return a.id < id; });
      list.insert(pos, p);
    }
    doc_lengths_[e.id] = terms.size();
    total_length_ += terms.size();
    next_id_ = std::max(next_id_, e.id + 1);
    next_seq_ = std::max(next_seq_, e.created_seq + 1);
    entries_.emplace(e.id, std::move(e));
  }

  std::vector<MatchResult> coarse_locked(std::string_view query, std::size_t limit) const {
    std::vector<MatchResult> out;
    if (entries_.empty()) return out;
    auto terms = index_terms(utf8::normalize_whitespace(query));
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n_docs = static_cast<double>(entries_.size());
    const double avgdl = static_cast<double>(total_length_) / n_docs;
    std::unordered_map<TmId, double> scores;
    for (const auto& term : terms) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double df = static_cast<double>(it->second.size());
      const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
      for (const auto& p : it->second) {
        const double tf = p.tf;
        const double dl = static_cast<double>(doc_lengths_.at(p.id));
        const double norm = bm25_.k1 * (1.0 - bm25_.b + bm25_.b * dl / avgdl);
        scores[p.id] += idf * tf * (bm25_.k1 + 1.0) / (tf + norm);
      }
    }
    std::vector<std::pair<TmId, double>> ranked(scores.begin(), scores.end());
    const std::size_t keep = std::min(limit, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                      ranked.end(), [](const auto& a, const auto& b) {
                        if (a.second != b.second) return a.second > b.second;
                        return a.first < b.first;
                      });
    ranked.resize(keep);
    for (const auto& [id, score] : ranked) out.push_back({entries_.at(id), 0.0, score});
    return out;
  }

  MatchUnit unit_;
  Bm25Params bm25_;
  mutable std::shared_mutex mu_;
  std::map<TmId, TmEntry> entries_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<TmId, std::size_t> doc_lengths_;
  std::size_t total_length_ = 0;
  TmId next_id_ = 1;
  std::uint64_t next_seq_ = 1;
};

}  // namespace imt
