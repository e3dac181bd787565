#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fmtbias::text {

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) noexcept {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

// A line of a larger buffer; `offset` is the byte offset of its first char.
struct Line {
  std::string_view text;
  std::size_t offset = 0;
};

// Splits on '\n'; a trailing '\r' is dropped from each line.
inline std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t nl = s.find('\n', start);
    std::size_t end = nl == std::string_view::npos ? s.size() : nl;
    std::string_view line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({line, start});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

// Offset of the first non-space character of `line` relative to the buffer.
inline std::size_t content_offset(const Line& line) noexcept {
  std::size_t i = 0;
  while (i < line.text.size() && is_space(line.text[i])) ++i;
  return line.offset + i;
}

// Lowercase, punctuation removed, whitespace collapsed to single spaces.
// Bytes >= 0x80 (UTF-8 continuation and lead bytes) are kept as-is.
inline std::string normalize_for_match(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_space(static_cast<char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (c < 0x80 && std::ispunct(c)) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  return out;
}

// True iff `needle` occurs in `haystack` aligned to word (space) boundaries.
// Both arguments are expected to be normalized already.
inline bool contains_words(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  std::string h = " " + std::string(haystack) + " ";
  std::string n = " " + std::string(needle) + " ";
  return h.find(n) != std::string::npos;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? s.npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace fmtbias::text
