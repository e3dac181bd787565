#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "fmtbias/error.hpp"
#include "fmtbias/text_util.hpp"

namespace fmtbias {

enum class FormatKind { Text, Table, Infobox, KG };

inline constexpr std::array<FormatKind, 4> kAllFormats = {
    FormatKind::Text, FormatKind::Table, FormatKind::Infobox, FormatKind::KG};

inline constexpr bool is_structured(FormatKind k) noexcept { return k != FormatKind::Text; }

inline constexpr std::string_view to_string(FormatKind k) noexcept {
  switch (k) {
    case FormatKind::Text: return "text";
    case FormatKind::Table: return "table";
    case FormatKind::Infobox: return "infobox";
    case FormatKind::KG: return "kg";
  }
  return "text";
}

// Plural display names used for format-pair labels ("tables vs texts").
inline constexpr std::string_view plural_name(FormatKind k) noexcept {
  switch (k) {
    case FormatKind::Text: return "texts";
    case FormatKind::Table: return "tables";
    case FormatKind::Infobox: return "infoboxes";
    case FormatKind::KG: return "KGs";
  }
  return "texts";
}

inline std::optional<FormatKind> try_parse_format_kind(std::string_view s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "text" || v == "texts") return FormatKind::Text;
  if (v == "table" || v == "tables") return FormatKind::Table;
  if (v == "infobox" || v == "infoboxes") return FormatKind::Infobox;
  if (v == "kg" || v == "kgs") return FormatKind::KG;
  return std::nullopt;
}

inline FormatKind parse_format_kind(std::string_view s) {
  if (auto k = try_parse_format_kind(s)) return *k;
  throw Error(Errc::UnknownFormat, "unknown format kind '" + std::string(s) + "'");
}

inline std::string format_pair_label(FormatKind a, FormatKind b) {
  return std::string(plural_name(a)) + " vs " + std::string(plural_name(b));
}

}  // namespace fmtbias
