#pragma once

// UTF-8 text helpers shared by the corpus and normalizer modules.

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "attribeval/error.hpp"

namespace attribeval::text {

namespace detail {

inline const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  return *n;
}

inline const icu::Normalizer2& nfd() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalizer unavailable");
  return *n;
}

inline icu::UnicodeString from_utf8(std::string_view s) {
  return icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
}

inline std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

}  // namespace detail

inline bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

inline std::string to_nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = detail::nfc().normalize(detail::from_utf8(s), status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  return detail::to_utf8(out);
}

// "\r\n" and lone "\r" become "\n".
inline std::string normalize_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

// Canonical form applied to every book before tokenizing.
inline std::string canonicalize(std::string_view raw) {
  return to_nfc(normalize_newlines(raw));
}

// Maximal runs of non-whitespace code points, as views into `s`.
// Invalid UTF-8 bytes count as non-whitespace.
inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> words;
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto len = static_cast<int32_t>(s.size());
  int32_t i = 0;
  int32_t start = -1;
  while (i < len) {
    int32_t at = i;
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    bool space = c >= 0 && is_space(c);
    if (space) {
      if (start >= 0) {
        words.emplace_back(s.data() + start, static_cast<std::size_t>(at - start));
        start = -1;
      }
    } else if (start < 0) {
      start = at;
    }
  }
  if (start >= 0) words.emplace_back(s.data() + start, static_cast<std::size_t>(len - start));
  return words;
}

inline std::string_view trim(std::string_view s) {
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto len = static_cast<int32_t>(s.size());
  int32_t begin = 0;
  while (begin < len) {
    int32_t next = begin;
    UChar32 c;
    U8_NEXT(bytes, next, len, c);
    if (c < 0 || !is_space(c)) break;
    begin = next;
  }
  int32_t end = len;
  while (end > begin) {
    int32_t prev = end;
    UChar32 c;
    U8_PREV(bytes, 0, prev, c);
    if (c < 0 || !is_space(c)) break;
    end = prev;
  }
  return s.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin));
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

// Case- and diacritic-insensitive key: NFD, drop nonspacing marks, case fold,
// recompose. Curly apostrophes become ASCII.
inline std::string fold(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString decomposed = detail::nfd().normalize(detail::from_utf8(s), status);
  if (U_FAILURE(status)) throw Error("NFD normalization failed");
  icu::UnicodeString stripped;
  for (int32_t i = 0; i < decomposed.length();) {
    UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    if (c == 0x2019 || c == 0x2018) c = '\'';
    stripped.append(c);
  }
  stripped.foldCase();
  icu::UnicodeString out = detail::nfc().normalize(stripped, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  return detail::to_utf8(out);
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

inline bool contains_whitespace(std::string_view s) {
  return split_whitespace(s).size() != 1 || split_whitespace(s).front().size() != s.size();
}

}  // namespace attribeval::text
