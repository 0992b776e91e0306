#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "attribeval/error.hpp"

namespace attribeval::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a sibling temp file and renames, so readers never see a
// half-written stage output.
inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw EmitError("cannot write", path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw EmitError("write failed", path.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw EmitError("rename failed (" + ec.message() + ")", path.string());
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": invalid JSON: " + e.what());
  }
}

// Canonical form: 2-space indent, keys sorted (nlohmann's default object
// is an ordered std::map), trailing newline.
inline std::string canonical(const json& j) { return j.dump(2) + "\n"; }

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

template <typename Range>
std::string to_jsonl(const Range& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += json(row).dump();
    out += '\n';
  }
  return out;
}

template <typename Range>
void write_jsonl(const std::filesystem::path& path, const Range& rows) {
  write_file(path, to_jsonl(rows));
}

}  // namespace attribeval::io
