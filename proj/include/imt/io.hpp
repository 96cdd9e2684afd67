#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "imt/error.hpp"
#include "imt/utf8.hpp"

namespace imt::io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// Write-then-rename so readers never observe a torn file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, content);
  std::filesystem::rename(tmp, path);
}

inline void append_line(const std::filesystem::path& path, std::string_view line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::io, "cannot append to " + path.string());
  out << line << '\n';
  out.flush();
}

inline std::vector<std::string> lines(std::string_view content) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : content) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  return lines(read_file(path));
}

struct ParsedPairs {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> warnings;
};

// Bilingual upload: one pair per line, either `left<TAB>right` or a JSON
// object carrying the two named fields. Blank lines are ignored; malformed
// lines become warnings.
inline ParsedPairs parse_pairs(std::string_view content, const std::string& left_key = "source",
                               const std::string& right_key = "target") {
  ParsedPairs out;
  const auto all = lines(content);
  for (std::size_t n = 0; n < all.size(); ++n) {
    const std::string line = all[n];
    if (utf8::normalize_whitespace(line).empty()) continue;
    const std::string where = "line " + std::to_string(n + 1) + ": ";
    std::string left;
    std::string right;
    if (line.front() == '{') {
      try {
        const auto j = nlohmann::json::parse(line);
        left = j.at(left_key).get<std::string>();
        right = j.at(right_key).get<std::string>();
      } catch (const nlohmann::json::exception&) {
        out.warnings.push_back(where + "malformed JSON record");
        continue;
      }
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        out.warnings.push_back(where + "expected exactly two tab-separated fields");
        continue;
      }
      left = line.substr(0, tab);
      right = line.substr(tab + 1);
    }
    left = utf8::normalize_whitespace(left);
    right = utf8::normalize_whitespace(right);
    if (left.empty() || right.empty()) {
      out.warnings.push_back(where + "empty " + (left.empty() ? left_key : right_key));
      continue;
    }
    out.pairs.emplace_back(std::move(left), std::move(right));
  }
  return out;
}

inline ParsedPairs read_pairs(const std::filesystem::path& path,
                              const std::string& left_key = "source",
                              const std::string& right_key = "target") {
  return parse_pairs(read_file(path), left_key, right_key);
}

}  // namespace imt::io
