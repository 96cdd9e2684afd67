#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/error.hpp"
#include "imt/utf8.hpp"

namespace imt {

struct TermEntry {
  std::int64_t id = 0;
  std::string source_term;
  std::string target_term;

  friend bool operator==(const TermEntry&, const TermEntry&) = default;
};

inline nlohmann::json to_json(const TermEntry& t) {
  return {{"id", t.id}, {"source_term", t.source_term}, {"target_term", t.target_term}};
}

inline TermEntry term_entry_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::int64_t>(), j.at("source_term").get<std::string>(),
          j.at("target_term").get<std::string>()};
}

struct TermHit {
  TermEntry entry;
  // Offset in code points into the whitespace-normalized sentence.
  std::size_t offset = 0;
};

// Bilingual glossary with exact, case-sensitive substring lookup. Matching
// walks a byte trie from every code point boundary of the sentence.
class Termbase {
 public:
  Termbase() { nodes_.emplace_back(); }

  Termbase(const Termbase&) = delete;
  Termbase& operator=(const Termbase&) = delete;

  // Returns the new id, or nullopt for an empty side or a duplicate pair.
  std::optional<std::int64_t> add(std::string_view source_term, std::string_view target_term) {
    std::unique_lock lock(mu_);
    TermEntry t{next_id_, utf8::normalize_whitespace(source_term),
                utf8::normalize_whitespace(target_term)};
    if (t.source_term.empty() || t.target_term.empty()) return std::nullopt;
    if (pairs_.count({t.source_term, t.target_term})) return std::nullopt;
    insert_locked(std::move(t));
    return next_id_ - 1;
  }

  void restore(TermEntry t) {
    std::unique_lock lock(mu_);
    if (pairs_.count({t.source_term, t.target_term})) return;
    insert_locked(std::move(t));
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

  std::vector<TermEntry> entries() const {
    std::shared_lock lock(mu_);
    std::vector<TermEntry> out;
    for (const auto& [id, t] : entries_) out.push_back(t);
    return out;
  }

  // Every occurrence of every term. Ordered by offset, longer terms first at
  // equal offsets, then by id.
  std::vector<TermHit> find_terms(std::string_view sentence) const {
    std::shared_lock lock(mu_);
    const std::string s = utf8::normalize_whitespace(sentence);
    std::vector<TermHit> hits;
    std::vector<std::pair<std::size_t, std::size_t>> lengths;  // parallel to hits
    std::size_t cp_offset = 0;
    for (std::size_t start = 0; start < s.size(); ++start) {
      if ((static_cast<unsigned char>(s[start]) & 0xC0) == 0x80) continue;
      std::size_t node = 0;
      for (std::size_t i = start; i < s.size(); ++i) {
        auto it = nodes_[node].children.find(static_cast<unsigned char>(s[i]));
        if (it == nodes_[node].children.end()) break;
        node = it->second;
        for (std::int64_t id : nodes_[node].terms) {
          hits.push_back({entries_.at(id), cp_offset});
          lengths.emplace_back(i + 1 - start, hits.size() - 1);
        }
      }
      ++cp_offset;
    }
    std::vector<std::size_t> order(hits.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (hits[a].offset != hits[b].offset) return hits[a].offset < hits[b].offset;
      if (lengths[a].first != lengths[b].first) return lengths[a].first > lengths[b].first;
      return hits[a].entry.id < hits[b].entry.id;
    });
    std::vector<TermHit> sorted;
    sorted.reserve(hits.size());
    for (std::size_t i : order) sorted.push_back(std::move(hits[i]));
    return sorted;
  }

 private:
  struct Node {
    std::map<unsigned char, std::size_t> children;
    std::vector<std::int64_t> terms;
  };

  void insert_locked(TermEntry t) {
    std::size_t node = 0;
    for (char c : t.source_term) {
      const auto b = static_cast<unsigned char>(c);
      auto it = nodes_[node].children.find(b);
      if (it == nodes_[node].children.end()) {
        nodes_.emplace_back();
        it = nodes_[node].children.emplace(b, nodes_.size() - 1).first;
      }
      node = it->second;
    }
    nodes_[node].terms.push_back(t.id);
    pairs_.insert({t.source_term, t.target_term});
    next_id_ = std::max(next_id_, t.id + 1);
    entries_.emplace(t.id, std::move(t));
  }

  mutable std::shared_mutex mu_;
  std::vector<Node> nodes_;
  std::map<std::int64_t, TermEntry> entries_;
  std::set<std::pair<std::string, std::string>> pairs_;
  std::int64_t next_id_ = 1;
};

}  // namespace imt
