#pragma once

// Condenses free-form model answers into {correct, incorrect, unknown} and
// round-trips labels through a human adjudication CSV.
//
// Extraction applies an ordered rule list taken from a rules file:
//   1. unknown phrases  -> no name
//   2. attribution patterns -> name captured by the earliest match
//   3. alias scan       -> earliest alias occurrence (longest on ties)
//   4. otherwise        -> no name
//
// Rules file syntax (JSON):
//   {"version": "...", "unknown_phrases": [...], "attribution_patterns": [...]}
// Both lists hold ICU regular expressions matched case-insensitively.
// Attribution patterns must contain the token {name}; it expands to a
// case-sensitive capture of 1-4 capitalised words (initials like "H." are
// accepted), e.g. "written by {name}".

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <openssl/evp.h>
#include <unicode/regex.h>

#include "attribeval/corpus.hpp"
#include "attribeval/csv.hpp"
#include "attribeval/error.hpp"
#include "attribeval/io.hpp"
#include "attribeval/lifecycle.hpp"
#include "attribeval/text.hpp"

namespace attribeval {

enum class Label { correct, incorrect, unknown };
enum class Provenance { automatic, human };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::correct: return "correct";
    case Label::incorrect: return "incorrect";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "correct") return Label::correct;
  if (s == "incorrect") return Label::incorrect;
  if (s == "unknown") return Label::unknown;
  return std::nullopt;
}

inline std::string_view to_string(Provenance p) { return p == Provenance::human ? "human" : "auto"; }

// (model_name, book_id, chunk_index)
struct RecordKey {
  std::string model_name;
  std::string book_id;
  std::size_t chunk_index = 0;

  auto tie() const { return std::tie(model_name, book_id, chunk_index); }
  bool operator<(const RecordKey& o) const { return tie() < o.tie(); }
  bool operator==(const RecordKey& o) const { return tie() == o.tie(); }
};

struct LabeledRecord {
  std::string book_id;
  std::size_t chunk_index = 0;
  std::string model_name;
  Label label = Label::unknown;
  std::optional<std::string> predicted_name;
  Provenance provenance = Provenance::automatic;

  RecordKey key() const { return {model_name, book_id, chunk_index}; }
  bool operator==(const LabeledRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const LabeledRecord& r) {
  j = nlohmann::json{{"book_id", r.book_id},
                     {"chunk_index", r.chunk_index},
                     {"model_name", r.model_name},
                     {"label", to_string(r.label)},
                     {"predicted_name", r.predicted_name ? nlohmann::json(*r.predicted_name) : nlohmann::json()},
                     {"provenance", to_string(r.provenance)}};
}

inline void from_json(const nlohmann::json& j, LabeledRecord& r) {
  j.at("book_id").get_to(r.book_id);
  j.at("chunk_index").get_to(r.chunk_index);
  j.at("model_name").get_to(r.model_name);
  auto label = parse_label(j.at("label").get<std::string>());
  if (!label) throw UsageError("invalid label in labels store: " + j.at("label").dump());
  r.label = *label;
  const auto& name = j.at("predicted_name");
  r.predicted_name = name.is_null() ? std::nullopt : std::optional<std::string>(name.get<std::string>());
  auto prov = j.at("provenance").get<std::string>();
  if (prov != "auto" && prov != "human") throw UsageError("invalid provenance in labels store: " + prov);
  r.provenance = prov == "human" ? Provenance::human : Provenance::automatic;
}

inline void write_labels_store(const std::filesystem::path& path, std::vector<LabeledRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const LabeledRecord& a, const LabeledRecord& b) { return a.key() < b.key(); });
  io::write_jsonl(path, records);
}

inline std::vector<LabeledRecord> read_labels_store(const std::filesystem::path& path) {
  std::vector<LabeledRecord> out;
  for (const auto& row : io::read_jsonl(path)) out.push_back(row.get<LabeledRecord>());
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

struct Rules {
  std::string version;
  std::vector<std::string> unknown_phrases;
  std::vector<std::string> attribution_patterns;

  nlohmann::json to_json() const {
    return {{"version", version}, {"unknown_phrases", unknown_phrases}, {"attribution_patterns", attribution_patterns}};
  }

  static Rules from_json(const nlohmann::json& j) {
    Rules r;
    r.version = j.value("version", "");
    j.at("unknown_phrases").get_to(r.unknown_phrases);
    j.at("attribution_patterns").get_to(r.attribution_patterns);
    return r;
  }

  static Rules load(const std::filesystem::path& path) {
    try {
      return from_json(io::read_json(path));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(path.string() + ": " + e.what());
    }
  }

  // Hash of the canonical JSON form; independent of file formatting.
  std::string sha256() const { return sha256_hex(to_json().dump()); }
};

// canonical surname -> accepted spellings (folded). Alias sets of different
// authors are disjoint.
class AliasTable {
 public:
  void add(std::string_view canonical_surname, std::string_view alias) {
    auto canon = text::fold(canonical_surname);
    auto a = text::fold(text::trim(alias));
    if (canon.empty() || a.empty()) throw UsageError("empty alias or surname");
    auto it = owner_.find(a);
    if (it != owner_.end() && it->second != canon) {
      throw UsageError("alias '" + a + "' claimed by both '" + it->second + "' and '" + canon + "'");
    }
    owner_[a] = canon;
    table_[canon].insert(a);
    if (a != canon) add(canon, canon);
  }

  static AliasTable from_manifest(const std::vector<BookManifestEntry>& manifest) {
    AliasTable t;
    for (const auto& e : manifest) {
      t.add(e.author_surname, e.author_surname);
      if (!e.author_full.empty()) t.add(e.author_surname, e.author_full);
    }
    return t;
  }

  // JSON object {"surname": ["alias", ...], ...}
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("alias file must be a JSON object");
    for (const auto& [canon, aliases] : j.items()) {
      add(canon, canon);
      for (const auto& a : aliases) add(canon, a.get<std::string>());
    }
  }

  bool contains_surname(std::string_view surname) const { return table_.count(text::fold(surname)) > 0; }

  std::optional<std::string> canonical_for(std::string_view name) const {
    auto it = owner_.find(text::fold(name));
    if (it == owner_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, std::set<std::string>>& entries() const { return table_; }
  // alias -> canonical surname
  const std::map<std::string, std::string>& reverse() const { return owner_; }

 private:
  std::map<std::string, std::set<std::string>> table_;
  std::map<std::string, std::string> owner_;
};

namespace detail {

inline constexpr std::string_view kNameToken = "{name}";
inline constexpr std::string_view kNameWord = R"((?:\p{Lu}\.|\p{Lu}[\p{L}\p{M}'\x{2019}\-]*))";

inline std::string expand_name_token(std::string_view pattern) {
  auto at = pattern.find(kNameToken);
  if (at == std::string_view::npos) throw UsageError("attribution pattern lacks {name}: " + std::string(pattern));
  std::string group = "(?-i:(" + std::string(kNameWord) + "(?:[\\p{Zs}\\t]+" + std::string(kNameWord) + "){0,3}))";
  return std::string(pattern.substr(0, at)) + group + std::string(pattern.substr(at + kNameToken.size()));
}

inline std::unique_ptr<icu::RegexPattern> compile(const std::string& pattern) {
  UParseError perr;
  UErrorCode status = U_ZERO_ERROR;
  std::unique_ptr<icu::RegexPattern> p(
      icu::RegexPattern::compile(text::detail::from_utf8(pattern), UREGEX_CASE_INSENSITIVE, perr, status));
  if (U_FAILURE(status)) throw UsageError("invalid rule pattern: " + pattern);
  return p;
}

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace detail

// "Jonathan Swift" -> "swift"; "Austen's" -> "austen".
inline std::optional<std::string> surname_of(std::string_view name) {
  auto words = text::split_whitespace(name);
  if (words.empty()) return std::nullopt;
  std::string last = text::fold(words.back());
  for (std::string_view suffix : {"'s"}) {
    if (last.size() > suffix.size() && std::string_view(last).ends_with(suffix)) last.resize(last.size() - suffix.size());
  }
  while (!last.empty() && (last.back() == '\'' || last.back() == '-' || last.back() == '.')) last.pop_back();
  if (last.empty()) return std::nullopt;
  return last;
}

class Normalizer {
 public:
  Normalizer(Rules rules, AliasTable aliases) : rules_(std::move(rules)), aliases_(std::move(aliases)) {
    for (const auto& p : rules_.unknown_phrases) unknown_.push_back(detail::compile(p));
    for (const auto& p : rules_.attribution_patterns) attribution_.push_back(detail::compile(detail::expand_name_token(p)));
  }

  const Rules& rules() const { return rules_; }
  const AliasTable& aliases() const { return aliases_; }

  bool says_unknown(std::string_view raw) const {
    auto u = text::detail::from_utf8(raw);
    for (const auto& p : unknown_) {
      UErrorCode status = U_ZERO_ERROR;
      std::unique_ptr<icu::RegexMatcher> m(p->matcher(u, status));
      if (U_SUCCESS(status) && m->find()) return true;
    }
    return false;
  }

  // Full name span captured by the earliest attribution match.
  std::optional<std::string> attributed_name(std::string_view raw) const {
    auto u = text::detail::from_utf8(raw);
    std::optional<std::pair<int32_t, std::string>> best;
    for (const auto& p : attribution_) {
      UErrorCode status = U_ZERO_ERROR;
      std::unique_ptr<icu::RegexMatcher> m(p->matcher(u, status));
      if (U_FAILURE(status) || !m->find()) continue;
      int32_t start = m->start(status);
      icu::UnicodeString name = m->group(1, status);
      if (U_FAILURE(status)) continue;
      if (!best || start < best->first) best = {start, text::detail::to_utf8(name)};
    }
    if (!best) return std::nullopt;
    return best->second;
  }

  // Canonical surname of the earliest alias occurring as a whole word.
  std::optional<std::string> scan_aliases(std::string_view raw) const {
    const std::string folded = text::fold(raw);
    std::optional<std::tuple<std::size_t, std::size_t, std::string>> best;  // pos, -len, canonical
    for (const auto& [alias, canon] : aliases_.reverse()) {
      std::size_t pos = 0;
      while ((pos = folded.find(alias, pos)) != std::string::npos) {
        std::size_t end = pos + alias.size();
        bool left_ok = pos == 0 || !detail::is_word_byte(static_cast<unsigned char>(folded[pos - 1]));
        bool right_ok = end >= folded.size() || !detail::is_word_byte(static_cast<unsigned char>(folded[end]));
        if (left_ok && right_ok) {
          std::tuple<std::size_t, std::size_t, std::string> cand{pos, folded.size() - alias.size(), canon};
          if (!best || cand < *best) best = cand;
          break;
        }
        ++pos;
      }
    }
    if (!best) return std::nullopt;
    return std::get<2>(*best);
  }

  std::optional<std::string> extract_author_name(std::string_view raw) const {
    if (text::is_blank(raw) || says_unknown(raw)) return std::nullopt;
    if (auto name = attributed_name(raw)) {
      // Multi-word aliases ("Mary Ann Evans") resolve on the full span.
      if (auto canon = aliases_.canonical_for(*name)) return canon;
      if (auto s = surname_of(*name)) return s;
    }
    return scan_aliases(raw);
  }

  LabeledRecord classify(const PredictionRecord& prediction, const BookManifestEntry& truth) const {
    if (!aliases_.contains_surname(truth.author_surname)) {
      throw UsageError("alias table has no entry for '" + truth.author_surname + "'");
    }
    LabeledRecord out;
    out.book_id = prediction.book_id;
    out.chunk_index = prediction.chunk_index;
    out.model_name = prediction.model_name;
    out.label = Label::unknown;
    auto name = extract_author_name(prediction.final_text);
    if (!name) return out;
    auto canon = aliases_.canonical_for(*name).value_or(*name);
    if (canon == text::fold(truth.author_surname)) {
      out.label = Label::correct;
      out.predicted_name = truth.author_surname;
    } else {
      out.label = Label::incorrect;
      out.predicted_name = canon;
    }
    return out;
  }

 private:
  Rules rules_;
  AliasTable aliases_;
  std::vector<std::unique_ptr<icu::RegexPattern>> unknown_;
  std::vector<std::unique_ptr<icu::RegexPattern>> attribution_;
};

inline const std::vector<std::string>& adjudication_header() {
  static const std::vector<std::string> header = {"model_name", "book_id",  "chunk_index", "final_text",
                                                  "auto_label", "auto_name", "human_label", "human_name"};
  return header;
}

using FinalTexts = std::map<RecordKey, std::string>;

// One row per (model, sampled chunk) with the human columns left blank.
// Models are those present in `records`.
inline std::string export_for_adjudication(const std::vector<LabeledRecord>& records,
                                           const std::vector<ChunkRef>& sample, const FinalTexts& final_texts) {
  std::map<RecordKey, const LabeledRecord*> by_key;
  std::set<std::string> models;
  for (const auto& r : records) {
    by_key[r.key()] = &r;
    models.insert(r.model_name);
  }
  std::vector<ChunkRef> ordered = sample;
  std::sort(ordered.begin(), ordered.end());

  std::vector<csv::Row> rows{adjudication_header()};
  std::vector<std::string> gaps;
  for (const auto& model : models) {
    for (const auto& ref : ordered) {
      RecordKey key{model, ref.book_id, ref.chunk_index};
      auto it = by_key.find(key);
      if (it == by_key.end()) {
        gaps.push_back(model + "/" + ref.book_id + "#" + std::to_string(ref.chunk_index));
        continue;
      }
      const auto& r = *it->second;
      auto text_it = final_texts.find(key);
      rows.push_back({r.model_name, r.book_id, std::to_string(r.chunk_index),
                      text_it == final_texts.end() ? std::string() : text_it->second, std::string(to_string(r.label)),
                      r.predicted_name.value_or(""), "", ""});
    }
  }
  if (!gaps.empty()) {
    std::string msg = "no labeled record for sampled chunk(s):";
    for (const auto& g : gaps) msg += " " + g;
    throw ExportError(msg);
  }
  return csv::format(rows);
}

// Rows with a non-blank human_label become human-provenance records; all
// others reproduce the auto columns.
inline std::vector<LabeledRecord> import_adjudication(std::string_view csv_text) {
  auto rows = csv::parse(csv_text);
  if (rows.empty() || rows.front() != adjudication_header()) {
    throw ImportError("header does not match the adjudication export schema", 0);
  }
  std::vector<LabeledRecord> out;
  for (std::size_t n = 1; n < rows.size(); ++n) {
    const auto& row = rows[n];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != adjudication_header().size()) throw ImportError("expected 8 fields", n);
    LabeledRecord r;
    r.model_name = row[0];
    r.book_id = row[1];
    try {
      std::size_t used = 0;
      r.chunk_index = std::stoull(row[2], &used);
      if (used != row[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ImportError("invalid chunk_index '" + row[2] + "'", n);
    }
    auto auto_label = parse_label(row[4]);
    if (!auto_label) throw ImportError("invalid auto_label '" + row[4] + "'", n);
    r.label = *auto_label;
    if (!row[5].empty()) r.predicted_name = row[5];

    auto human_label = std::string(text::trim(row[6]));
    auto human_name = std::string(text::trim(row[7]));
    if (!human_label.empty()) {
      auto label = parse_label(text::fold(human_label));
      if (!label) throw ImportError("invalid human_label '" + human_label + "'", n);
      if (*label == Label::unknown && !human_name.empty()) {
        throw ImportError("human_label unknown must not carry a name", n);
      }
      r.label = *label;
      r.predicted_name = human_name.empty() ? std::nullopt : std::optional<std::string>(text::fold(human_name));
      r.provenance = Provenance::human;
    } else if (!human_name.empty()) {
      throw ImportError("human_name given without human_label", n);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Human-provenance records replace any record with the same key.
inline std::vector<LabeledRecord> merge_labels(std::vector<LabeledRecord> base,
                                               const std::vector<LabeledRecord>& overrides) {
  std::map<RecordKey, LabeledRecord> merged;
  for (auto& r : base) merged[r.key()] = std::move(r);
  for (const auto& r : overrides) {
    auto it = merged.find(r.key());
    if (r.provenance == Provenance::human || it == merged.end()) {
      merged[r.key()] = r;
    }
  }
  std::vector<LabeledRecord> out;
  for (auto& [_, r] : merged) out.push_back(std::move(r));
  return out;
}

}  // namespace attribeval
