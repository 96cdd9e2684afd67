#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/engine.hpp"
#include "imt/error.hpp"
#include "imt/io.hpp"
#include "imt/termbase.hpp"
#include "imt/tm_index.hpp"
#include "imt/utf8.hpp"

namespace imt {

enum class SegmentStatus { drafted, editing, confirmed };

inline const char* to_string(SegmentStatus s) {
  switch (s) {
    case SegmentStatus::drafted: return "drafted";
    case SegmentStatus::editing: return "editing";
    case SegmentStatus::confirmed: return "confirmed";
  }
  return "drafted";
}

inline SegmentStatus segment_status_from_string(std::string_view s) {
  if (s == "drafted") return SegmentStatus::drafted;
  if (s == "editing") return SegmentStatus::editing;
  if (s == "confirmed") return SegmentStatus::confirmed;
  throw Error(ErrorCode::invalid_argument, "unknown segment status: " + std::string(s));
}

using ProjectId = std::int64_t;
using SegmentId = std::int64_t;

struct SegmentState {
  SegmentId id = 0;
  ProjectId project_id = 0;
  std::string source;
  std::string mt_draft;
  std::string current_target;
  std::size_t locked_upto = 0;  // code points of current_target
  SegmentStatus status = SegmentStatus::drafted;

  friend bool operator==(const SegmentState&, const SegmentState&) = default;
};

inline nlohmann::json to_json(const SegmentState& s) {
  return {{"id", s.id},
          {"project_id", s.project_id},
          {"source", s.source},
          {"mt_draft", s.mt_draft},
          {"current_target", s.current_target},
          {"locked_upto", s.locked_upto},
          {"status", to_string(s.status)}};
}

inline SegmentState segment_from_json(const nlohmann::json& j) {
  SegmentState s;
  s.id = j.at("id").get<SegmentId>();
  s.project_id = j.at("project_id").get<ProjectId>();
  s.source = j.at("source").get<std::string>();
  s.mt_draft = j.at("mt_draft").get<std::string>();
  s.current_target = j.at("current_target").get<std::string>();
  s.locked_upto = j.at("locked_upto").get<std::size_t>();
  s.status = segment_status_from_string(j.at("status").get<std::string>());
  return s;
}

// Splits plain text into sentences: every newline ends one, as do 。！？
// and . ! ? when followed by whitespace or the end of the text. The
// terminator stays with its sentence.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  const auto cps = utf8::decode(text);
  std::vector<char32_t> current;
  auto flush = [&] {
    auto s = utf8::normalize_whitespace(utf8::encode(current));
    if (!s.empty()) out.push_back(std::move(s));
    current.clear();
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (c == U'\n' || c == U'\r') {
      flush();
      continue;
    }
    current.push_back(c);
    const bool cjk_end = c == U'。' || c == U'！' || c == U'？';
    const bool ascii_end =
        (c == U'.' || c == U'!' || c == U'?') && (i + 1 == cps.size() || utf8::is_space(cps[i + 1]));
    if (cjk_end || ascii_end) flush();
  }
  flush();
  return out;
}

struct ProjectInfo {
  ProjectId id = 0;
  std::string name;
  EngineSettings settings;
};

inline nlohmann::json to_json(const ProjectInfo& p) {
  return {{"id", p.id}, {"name", p.name}, {"settings", to_json(p.settings)}};
}

struct UploadResult {
  std::size_t added = 0;
  std::vector<std::string> warnings;
};

struct IngestedSegment {
  SegmentState segment;
  std::optional<MatchResult> tm_match;
  std::vector<TermHit> terms;
};

struct CompletionReply {
  std::uint64_t revision = 0;
  SegmentId segment_id = 0;
  Completion completion;
};

struct ConfirmReply {
  SegmentState segment;
  std::optional<TmId> tm_id;
  bool already_confirmed = false;
};

// Projects, their stores and segments, persisted under one data directory:
//   projects/<id>/project.json      settings, rewritten atomically
//   projects/<id>/tm.jsonl          one TmEntry per line
//   projects/<id>/termbase.jsonl    one TermEntry per line
//   projects/<id>/segments.jsonl    one SegmentState snapshot per change
// Replaying the logs in order reproduces the in-memory state.
class Service {
 public:
  Service(std::filesystem::path data_dir, ModelBundle models)
      : data_dir_(std::move(data_dir)), models_(std::move(models)) {
    if (!models_.mt) throw Error(ErrorCode::invalid_argument, "service needs a translation model");
    std::filesystem::create_directories(projects_dir());
    replay();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const std::filesystem::path& data_dir() const noexcept { return data_dir_; }
  const ModelBundle& models() const noexcept { return models_; }

  ProjectInfo create_project(std::string_view name, const nlohmann::json& settings_json = {}) {
    const auto clean = utf8::normalize_whitespace(name);
    if (clean.empty()) throw Error(ErrorCode::invalid_argument, "project name must not be empty");
    const EngineSettings settings = settings_json.is_null()
                                        ? EngineSettings{}
                                        : engine_settings_from_json(settings_json);
    std::unique_lock lock(mu_);
    for (const auto& [id, p] : projects_) {
      if (p->info.name == clean) {
        throw Error(ErrorCode::conflict, "project name already exists: " + clean);
      }
    }
    auto p = std::make_shared<Project>();
    p->info = {next_project_id_++, clean, settings};
    std::filesystem::create_directories(project_dir(p->info.id));
    write_project_file(*p);
    projects_.emplace(p->info.id, p);
    return p->info;
  }

  std::vector<ProjectInfo> list_projects() const {
    std::shared_lock lock(mu_);
    std::vector<ProjectInfo> out;
    for (const auto& [id, p] : projects_) {
      std::lock_guard plock(p->mu);
      out.push_back(p->info);
    }
    return out;
  }

  ProjectInfo project(ProjectId id) const {
    auto p = find_project(id);
    std::lock_guard plock(p->mu);
    return p->info;
  }

  EngineSettings settings(ProjectId id) const { return project(id).settings; }

  // Partial update; a completion already running keeps its snapshot.
  EngineSettings update_settings(ProjectId id, const nlohmann::json& patch) {
    auto p = find_project(id);
    std::lock_guard plock(p->mu);
    const auto updated = engine_settings_from_json(patch, p->info.settings);
    p->info.settings = updated;
    write_project_file(*p);
    return updated;
  }

  UploadResult upload_tm(ProjectId id, std::string_view content) {
    auto parsed = io::parse_pairs(content);
    return add_tm(id, parsed.pairs, std::move(parsed.warnings));
  }

  UploadResult add_tm(ProjectId id, const std::vector<std::pair<std::string, std::string>>& pairs,
                      std::vector<std::string> warnings = {}) {
    auto p = find_project(id);
    std::lock_guard plock(p->mu);
    const auto added = p->tm.add_entries(pairs, TmOrigin::uploaded);
    for (std::size_t i : added.skipped) warnings.push_back("pair " + std::to_string(i + 1) + ": empty side");
    for (TmId tid : added.ids) {
      io::append_line(project_dir(id) / "tm.jsonl", to_json(*p->tm.get(tid)).dump());
    }
    return {added.ids.size(), std::move(warnings)};
  }

  UploadResult upload_termbase(ProjectId id, std::string_view content) {
    auto parsed = io::parse_pairs(content);
    auto p = find_project(id);
    std::lock_guard plock(p->mu);
    UploadResult result{0, std::move(parsed.warnings)};
    for (const auto& [s, t] : parsed.pairs) {
      const auto tid = p->termbase.add(s, t);
      if (!tid) {
        result.warnings.push_back("duplicate term: " + s);
        continue;
      }
      ++result.added;
      io::append_line(project_dir(id) / "termbase.jsonl",
                      to_json(TermEntry{*tid, s, t}).dump());
    }
    return result;
  }

  std::vector<IngestedSegment> ingest_document(ProjectId id, std::string_view text) {
    auto p = find_project(id);
    const auto sentences = split_sentences(text);
    EngineSettings snapshot;
    {
      std::lock_guard plock(p->mu);
      snapshot = p->info.settings;
    }
    const Engine engine(models_, snapshot, &p->tm, &p->termbase);
    std::vector<IngestedSegment> out;
    for (const auto& source : sentences) {
      IngestedSegment seg;
      const auto ctx = engine.prepare(source);
      seg.segment.source = source;
      seg.segment.mt_draft =
          continuation_text(engine.decode(ctx, PrefixSpec{}).nbest.front(), engine.target_vocab());
      seg.segment.current_target = seg.segment.mt_draft;
      seg.segment.project_id = id;
      seg.tm_match = ctx.tm_match;
      seg.terms = p->termbase.find_terms(source);
      out.push_back(std::move(seg));
    }
    std::lock_guard plock(p->mu);
    for (auto& seg : out) {
      seg.segment.id = next_segment_id_.fetch_add(1);
      record_segment(*p, seg.segment);
    }
    return out;
  }

  std::vector<SegmentState> segments(ProjectId id) const {
    auto p = find_project(id);
    std::lock_guard plock(p->mu);
    std::vector<SegmentState> out;
    for (SegmentId sid : p->segment_order) out.push_back(p->segments.at(sid));
    return out;
  }

  SegmentState segment(SegmentId sid) const {
    auto p = project_of(sid);
    std::lock_guard plock(p->mu);
    return p->segments.at(sid);
  }

  CompletionReply complete(SegmentId sid, std::string_view locked_text,
                           std::optional<std::string> dangling, std::uint64_t seed = 0) {
    auto p = project_of(sid);
    SegmentState seg;
    EngineSettings snapshot;
    {
      std::lock_guard plock(p->mu);
      seg = p->segments.at(sid);
      snapshot = p->info.settings;
    }
    if (seg.status == SegmentStatus::confirmed) {
      throw Error(ErrorCode::conflict, "segment " + std::to_string(sid) + " is confirmed");
    }
    CompletionReply reply;
    reply.revision = ++revision_;
    reply.segment_id = sid;
    const Engine engine(models_, snapshot, &p->tm, &p->termbase);
    reply.completion = engine.complete(seg.source, locked_text, dangling, seed);

    std::lock_guard plock(p->mu);
    auto& live = p->segments.at(sid);
    if (live.status == SegmentStatus::confirmed) return reply;
    live.status = SegmentStatus::editing;
    live.current_target = std::string(locked_text) + dangling.value_or("");
    live.locked_upto = utf8::length(locked_text);
    record_segment(*p, live);
    return reply;
  }

  ConfirmReply confirm(SegmentId sid, std::string_view final_target) {
    const auto target = utf8::normalize_whitespace(final_target);
    auto p = project_of(sid);
    std::lock_guard plock(p->mu);
    auto& seg = p->segments.at(sid);
    if (seg.status == SegmentStatus::confirmed) return {seg, std::nullopt, true};
    if (target.empty()) throw Error(ErrorCode::invalid_argument, "final target must not be empty");
    const std::pair<std::string, std::string> pair{seg.source, target};
    const auto added = p->tm.add_entries(std::span(&pair, 1), TmOrigin::online);
    if (added.ids.empty()) throw Error(ErrorCode::invalid_argument, "segment pair is empty");
    io::append_line(project_dir(p->info.id) / "tm.jsonl",
                    to_json(*p->tm.get(added.ids.front())).dump());
    seg.status = SegmentStatus::confirmed;
    seg.current_target = target;
    seg.locked_upto = utf8::length(target);
    record_segment(*p, seg);
    return {seg, added.ids.front(), false};
  }

  std::optional<MatchResult> best_match(ProjectId id, std::string_view query) const {
    auto p = find_project(id);
    double min_rate;
    {
      std::lock_guard plock(p->mu);
      min_rate = p->info.settings.min_match_rate;
    }
    return p->tm.best_match(query, min_rate);
  }

  std::size_t tm_size(ProjectId id) const { return find_project(id)->tm.size(); }
  std::size_t termbase_size(ProjectId id) const { return find_project(id)->termbase.size(); }

  // Full persistent state, for comparing a service against its replay.
  nlohmann::json snapshot() const {
    std::shared_lock lock(mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, p] : projects_) {
      std::lock_guard plock(p->mu);
      nlohmann::json tm = nlohmann::json::array();
      for (const auto& e : p->tm.entries()) tm.push_back(to_json(e));
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : p->termbase.entries()) terms.push_back(to_json(t));
      nlohmann::json segs = nlohmann::json::array();
      for (SegmentId sid : p->segment_order) segs.push_back(to_json(p->segments.at(sid)));
      out.push_back({{"project", to_json(p->info)}, {"tm", tm}, {"termbase", terms},
                     {"segments", segs}});
    }
    return out;
  }

 private:
  struct Project {
    ProjectInfo info;
    TmStore tm;
    Termbase termbase;
    std::map<SegmentId, SegmentState> segments;
    std::vector<SegmentId> segment_order;
    mutable std::mutex mu;  // serializes writes to this project and its logs
  };

  std::filesystem::path projects_dir() const { return data_dir_ / "projects"; }
  std::filesystem::path project_dir(ProjectId id) const {
    return projects_dir() / std::to_string(id);
  }

  std::shared_ptr<Project> find_project(ProjectId id) const {
    std::shared_lock lock(mu_);
    auto it = projects_.find(id);
    if (it == projects_.end()) {
      throw Error(ErrorCode::not_found, "unknown project " + std::to_string(id));
    }
    return it->second;
  }

  std::shared_ptr<Project> project_of(SegmentId sid) const {
    ProjectId owner;
    {
      std::shared_lock lock(owner_mu_);
      auto it = segment_owner_.find(sid);
      if (it == segment_owner_.end()) {
        throw Error(ErrorCode::not_found, "unknown segment " + std::to_string(sid));
      }
      owner = it->second;
    }
    return find_project(owner);
  }

  void write_project_file(const Project& p) const {
    io::write_file_atomic(project_dir(p.info.id) / "project.json", to_json(p.info).dump(1) + "\n");
  }

  // Caller holds p.mu.
  void record_segment(Project& p, const SegmentState& s) {
    io::append_line(project_dir(p.info.id) / "segments.jsonl", to_json(s).dump());
    apply_segment(p, s);
  }

  void apply_segment(Project& p, const SegmentState& s) {
    if (!p.segments.count(s.id)) {
      p.segment_order.push_back(s.id);
      std::unique_lock lock(owner_mu_);
      segment_owner_[s.id] = p.info.id;
    }
    p.segments[s.id] = s;
  }

  static std::vector<nlohmann::json> read_log(const std::filesystem::path& path) {
    std::vector<nlohmann::json> out;
    if (!std::filesystem::exists(path)) return out;
    for (const auto& line : io::read_lines(path)) {
      if (utf8::normalize_whitespace(line).empty()) continue;
      try {
        out.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::io, path.string() + ": corrupt log line: " + e.what());
      }
    }
    return out;
  }

  void replay() {
    std::vector<ProjectId> ids;
    for (const auto& entry : std::filesystem::directory_iterator(projects_dir())) {
      if (!std::filesystem::exists(entry.path() / "project.json")) continue;
      ids.push_back(std::stoll(entry.path().filename().string()));
    }
    std::sort(ids.begin(), ids.end());
    SegmentId max_segment = 0;
    for (ProjectId id : ids) {
      auto p = std::make_shared<Project>();
      try {
        const auto j = nlohmann::json::parse(io::read_file(project_dir(id) / "project.json"));
        p->info = {j.at("id").get<ProjectId>(), j.at("name").get<std::string>(),
                   engine_settings_from_json(j.at("settings"))};
        for (const auto& e : read_log(project_dir(id) / "tm.jsonl")) {
          p->tm.restore(tm_entry_from_json(e));
        }
        for (const auto& t : read_log(project_dir(id) / "termbase.jsonl")) {
          p->termbase.restore(term_entry_from_json(t));
        }
        projects_.emplace(p->info.id, p);
        for (const auto& s : read_log(project_dir(id) / "segments.jsonl")) {
          const auto seg = segment_from_json(s);
          apply_segment(*p, seg);
          max_segment = std::max(max_segment, seg.id);
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::io, "project " + std::to_string(id) + ": " + e.what());
      }
      next_project_id_ = std::max(next_project_id_, id + 1);
    }
    next_segment_id_ = max_segment + 1;
  }

  std::filesystem::path data_dir_;
  ModelBundle models_;
  // Lock order: mu_ before any Project::mu; owner_mu_ is a leaf lock.
  mutable std::shared_mutex mu_;  // guards projects_
  mutable std::shared_mutex owner_mu_;  // guards segment_owner_
  std::map<ProjectId, std::shared_ptr<Project>> projects_;
  std::map<SegmentId, ProjectId> segment_owner_;
  ProjectId next_project_id_ = 1;
  std::atomic<SegmentId> next_segment_id_{1};
  std::atomic<std::uint64_t> revision_{0};
};

}  // namespace imt
