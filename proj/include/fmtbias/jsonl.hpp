#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmtbias/error.hpp"

namespace fmtbias::jsonl {

using json = nlohmann::json;

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

// Calls `fn(obj, line_no)` for each nonblank line. JSON syntax errors are
// reported through `on_error` (or thrown as Schema when it is empty).
inline void for_each(const std::filesystem::path& path,
                     const std::function<void(const json&, std::size_t)>& fn,
                     const std::function<void(const LineError&)>& on_error = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      LineError err{no, std::string("invalid JSON: ") + e.what()};
      if (!on_error) throw Error(Errc::Schema, "line " + std::to_string(no) + ": " + err.message, no);
      on_error(err);
      continue;
    }
    fn(obj, no);
  }
  if (in.bad()) throw Error(Errc::Io, "read failure on '" + path.string() + "'");
}

inline std::vector<json> read_all(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each(path, [&](const json& j, std::size_t) { out.push_back(j); });
  return out;
}

// Writes atomically: content goes to a sibling temp file that is renamed into place.
template <typename Range, typename ToJson>
void write_all(const std::filesystem::path& path, const Range& items, ToJson to_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write '" + tmp + "'");
    for (const auto& item : items) out << to_json(item).dump() << '\n';
    if (!out) throw Error(Errc::Io, "write failure on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write '" + tmp + "'");
    out << content;
    if (!out) throw Error(Errc::Io, "write failure on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace fmtbias::jsonl
