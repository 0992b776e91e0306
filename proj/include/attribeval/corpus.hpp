#pragma once

// Book ingestion: Gutenberg boilerplate stripping, word tokenization and
// fixed-size word chunking.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "attribeval/error.hpp"
#include "attribeval/http.hpp"
#include "attribeval/io.hpp"
#include "attribeval/text.hpp"

namespace attribeval {

inline constexpr std::size_t kDefaultChunkSize = 400;

struct BookManifestEntry {
  std::string book_id;
  std::string title;
  std::string author_full;
  std::string author_surname;  // lowercase, single token
  std::string genre;
  std::uint64_t download_count = 0;
  std::uint64_t wikipedia_frequency = 0;
  std::string source;  // local path or http(s) URL
  // Reference chunk count for the edition the manifest was built from.
  std::optional<std::size_t> expected_chunks;

  bool operator==(const BookManifestEntry&) const = default;
};

inline void validate(const BookManifestEntry& e) {
  if (e.book_id.empty()) throw UsageError("manifest entry has empty book_id");
  const auto& s = e.author_surname;
  if (s.empty()) throw UsageError(e.book_id + ": author_surname is empty");
  if (text::contains_whitespace(s)) throw UsageError(e.book_id + ": author_surname contains whitespace");
  if (text::fold(s) != s) throw UsageError(e.book_id + ": author_surname must be lowercase");
}

inline void validate_manifest(const std::vector<BookManifestEntry>& manifest) {
  std::set<std::string> ids;
  for (const auto& e : manifest) {
    validate(e);
    if (!ids.insert(e.book_id).second) throw UsageError("duplicate book_id in manifest: " + e.book_id);
  }
}

inline void to_json(nlohmann::json& j, const BookManifestEntry& e) {
  j = nlohmann::json{{"book_id", e.book_id},
                     {"title", e.title},
                     {"author_full", e.author_full},
                     {"author_surname", e.author_surname},
                     {"genre", e.genre},
                     {"download_count", e.download_count},
                     {"wikipedia_frequency", e.wikipedia_frequency},
                     {"source", e.source}};
  if (e.expected_chunks) j["expected_chunks"] = *e.expected_chunks;
}

inline void from_json(const nlohmann::json& j, BookManifestEntry& e) {
  j.at("book_id").get_to(e.book_id);
  j.at("title").get_to(e.title);
  j.at("author_full").get_to(e.author_full);
  j.at("author_surname").get_to(e.author_surname);
  j.at("genre").get_to(e.genre);
  // The parser stores every non-negative integer literal as unsigned.
  auto count = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw UsageError(std::string(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  };
  e.download_count = count("download_count");
  e.wikipedia_frequency = count("wikipedia_frequency");
  j.at("source").get_to(e.source);
  if (j.contains("expected_chunks")) e.expected_chunks = j.at("expected_chunks").get<std::size_t>();
}

inline std::vector<BookManifestEntry> load_manifest(const std::filesystem::path& path) {
  auto j = io::read_json(path);
  if (!j.is_array()) throw UsageError(path.string() + ": manifest must be a JSON array");
  std::vector<BookManifestEntry> manifest;
  try {
    manifest = j.get<std::vector<BookManifestEntry>>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  validate_manifest(manifest);
  return manifest;
}

struct Chunk {
  std::string book_id;
  std::size_t chunk_index = 0;
  std::string text;
  std::size_t word_count = 0;

  bool operator==(const Chunk&) const = default;
};

inline void to_json(nlohmann::json& j, const Chunk& c) {
  j = nlohmann::json{{"book_id", c.book_id},
                     {"chunk_index", c.chunk_index},
                     {"text", c.text},
                     {"word_count", c.word_count}};
}

inline void from_json(const nlohmann::json& j, Chunk& c) {
  j.at("book_id").get_to(c.book_id);
  j.at("chunk_index").get_to(c.chunk_index);
  j.at("text").get_to(c.text);
  j.at("word_count").get_to(c.word_count);
}

struct ChunkRef {
  std::string book_id;
  std::size_t chunk_index = 0;

  auto operator<=>(const ChunkRef&) const = default;
};

inline void to_json(nlohmann::json& j, const ChunkRef& c) {
  j = nlohmann::json{{"book_id", c.book_id}, {"chunk_index", c.chunk_index}};
}

inline void from_json(const nlohmann::json& j, ChunkRef& c) {
  j.at("book_id").get_to(c.book_id);
  j.at("chunk_index").get_to(c.chunk_index);
}

struct StrippedText {
  std::string body;
  bool warning = false;  // one or both markers missing
};

namespace detail {

inline bool is_start_marker(std::string_view line) {
  return line.find("*** START OF") != std::string_view::npos &&
         text::ascii_lower(line).find("project gutenberg") != std::string_view::npos;
}

inline bool is_end_marker(std::string_view line) {
  return line.find("*** END OF") != std::string_view::npos;
}

}  // namespace detail

// Returns the text strictly between the Gutenberg start and end marker lines.
// A missing marker leaves that side of the text in place and sets `warning`.
inline StrippedText strip_boilerplate(std::string_view raw) {
  std::optional<std::size_t> body_begin;  // first byte after the start marker line
  std::optional<std::size_t> body_end;    // first byte of the end marker line
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    std::size_t line_end = nl == std::string_view::npos ? raw.size() : nl;
    std::size_t next = nl == std::string_view::npos ? raw.size() : nl + 1;
    auto line = raw.substr(pos, line_end - pos);
    if (!body_begin && detail::is_start_marker(line)) {
      body_begin = next;
    } else if (detail::is_end_marker(line)) {
      body_end = pos;
      break;
    }
    pos = next;
  }
  std::size_t begin = body_begin.value_or(0);
  std::size_t end = body_end.value_or(raw.size());
  if (end < begin) end = begin;
  return {std::string(raw.substr(begin, end - begin)), !(body_begin && body_end)};
}

inline std::vector<std::string> tokenize_words(std::string_view text) {
  auto views = text::split_whitespace(text);
  return {views.begin(), views.end()};
}

inline std::vector<Chunk> chunk_book(std::string_view book_id, std::string_view body,
                                     std::size_t chunk_size = kDefaultChunkSize) {
  if (chunk_size == 0) throw UsageError("chunk_size must be >= 1");
  auto words = text::split_whitespace(body);
  std::vector<Chunk> chunks;
  chunks.reserve((words.size() + chunk_size - 1) / chunk_size);
  for (std::size_t start = 0; start < words.size(); start += chunk_size) {
    std::size_t stop = std::min(words.size(), start + chunk_size);
    Chunk c;
    c.book_id = std::string(book_id);
    c.chunk_index = chunks.size();
    c.word_count = stop - start;
    for (std::size_t k = start; k < stop; ++k) {
      if (k > start) c.text.push_back(' ');
      c.text.append(words[k]);
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

// Canonicalize, strip and chunk a raw Gutenberg file in one go.
inline std::vector<Chunk> chunk_raw_book(std::string_view book_id, std::string_view raw,
                                         std::size_t chunk_size, bool* warning = nullptr) {
  auto stripped = strip_boilerplate(text::canonicalize(raw));
  if (warning) *warning = stripped.warning;
  return chunk_book(book_id, stripped.body, chunk_size);
}

// One GET of entry.source; the body is stored verbatim as
// <corpus_dir>/<book_id>.txt and returned.
inline std::string fetch_book(const BookManifestEntry& entry, const std::filesystem::path& corpus_dir,
                              double timeout_seconds = 60.0) {
  if (!http::is_url(entry.source)) throw UsageError(entry.book_id + ": source is not a URL");
  auto url = http::split_url(entry.source);
  auto client = http::make_client(url, timeout_seconds);
  auto res = client->Get(url.path);
  if (!res) {
    auto cause = httplib::to_string(res.error());
    throw FetchError(entry.book_id + ": fetch failed: " + cause, 0, cause);
  }
  if (res->status < 200 || res->status >= 300) {
    throw FetchError(entry.book_id + ": fetch failed with HTTP " + std::to_string(res->status),
                     res->status, "HTTP " + std::to_string(res->status));
  }
  io::write_file(corpus_dir / (entry.book_id + ".txt"), res->body);
  return res->body;
}

// Chunk store: one JSON object per line ordered by (book_id, chunk_index).
inline void write_chunk_store(const std::filesystem::path& path, std::vector<Chunk> chunks) {
  std::stable_sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) {
    return std::tie(a.book_id, a.chunk_index) < std::tie(b.book_id, b.chunk_index);
  });
  io::write_jsonl(path, chunks);
}

inline std::vector<Chunk> read_chunk_store(const std::filesystem::path& path) {
  std::vector<Chunk> chunks;
  for (const auto& row : io::read_jsonl(path)) chunks.push_back(row.get<Chunk>());
  return chunks;
}

}  // namespace attribeval
