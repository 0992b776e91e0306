#pragma once

// Sample-size calculation and reproducible per-book chunk sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "attribeval/corpus.hpp"
#include "attribeval/error.hpp"

namespace attribeval {

inline constexpr std::size_t kDefaultPerBookSample = 162;

struct SamplePlan {
  std::size_t per_book_n = kDefaultPerBookSample;
  std::uint64_t seed = 0;
  double margin_of_error = 0.07;
  double confidence = 0.95;
  double proportion = 0.5;

  bool operator==(const SamplePlan&) const = default;
};

inline void validate(const SamplePlan& p) {
  if (p.per_book_n < 1) throw UsageError("per_book_n must be >= 1");
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open01(p.margin_of_error)) throw UsageError("margin_of_error must lie in (0, 1)");
  if (!open01(p.confidence)) throw UsageError("confidence must lie in (0, 1)");
  if (!open01(p.proportion)) throw UsageError("proportion must lie in (0, 1)");
}

inline void to_json(nlohmann::json& j, const SamplePlan& p) {
  j = nlohmann::json{{"per_book_n", p.per_book_n},
                     {"seed", p.seed},
                     {"margin_of_error", p.margin_of_error},
                     {"confidence", p.confidence},
                     {"proportion", p.proportion}};
}

inline void from_json(const nlohmann::json& j, SamplePlan& p) {
  SamplePlan d;
  p.per_book_n = j.value("per_book_n", d.per_book_n);
  p.seed = j.value("seed", d.seed);
  p.margin_of_error = j.value("margin_of_error", d.margin_of_error);
  p.confidence = j.value("confidence", d.confidence);
  p.proportion = j.value("proportion", d.proportion);
}

// Two-tailed standard normal critical value for a confidence level.
inline double z_critical(double confidence) {
  boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + confidence / 2.0);
}

// Cochran: n0 = z^2 p (1 - p) / e^2, optionally finite-population corrected
// as n0 / (1 + (n0 - 1) / N). Rounded up.
inline std::size_t cochran_sample_size(double margin, double confidence, double proportion = 0.5,
                                       std::optional<std::size_t> population = std::nullopt) {
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open01(margin) || !open01(confidence) || !open01(proportion)) {
    throw UsageError("sample size parameters must lie in (0, 1)");
  }
  if (population && *population < 1) throw UsageError("population must be >= 1");
  const double z = z_critical(confidence);
  double n = z * z * proportion * (1.0 - proportion) / (margin * margin);
  if (population) n = n / (1.0 + (n - 1.0) / static_cast<double>(*population));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(n)));
}

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform integer in [0, bound) by rejection. std::uniform_int_distribution
// is implementation-defined, so it cannot give cross-platform samples.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace detail

// Per-book generator seed: a global seed mixed with the book id, so adding a
// book leaves the other books' samples unchanged.
inline std::uint64_t book_seed(std::uint64_t seed, std::string_view book_id) {
  return detail::splitmix64(seed ^ detail::fnv1a64(book_id));
}

// Uniform sample without replacement of min(n, |chunks|) chunks, sorted by
// chunk_index.
inline std::vector<Chunk> sample_chunks(const std::vector<Chunk>& chunks, std::size_t n, std::uint64_t seed) {
  if (chunks.empty()) throw UsageError("cannot sample from an empty chunk list");
  if (n < 1) throw UsageError("sample size must be >= 1");
  std::vector<std::size_t> idx(chunks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t take = std::min(n, chunks.size());
  std::mt19937_64 rng(book_seed(seed, chunks.front().book_id));
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + static_cast<std::size_t>(detail::bounded(rng, idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<Chunk> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(chunks[idx[i]]);
  std::sort(out.begin(), out.end(), [](const Chunk& a, const Chunk& b) { return a.chunk_index < b.chunk_index; });
  return out;
}

struct Sample {
  std::uint64_t seed = 0;
  std::size_t per_book_n = kDefaultPerBookSample;
  std::vector<ChunkRef> chunks;  // sorted by (book_id, chunk_index)

  bool operator==(const Sample&) const = default;
};

inline void to_json(nlohmann::json& j, const Sample& s) {
  j = nlohmann::json{{"seed", s.seed}, {"per_book_n", s.per_book_n}, {"chunks", s.chunks}};
}

inline void from_json(const nlohmann::json& j, Sample& s) {
  j.at("seed").get_to(s.seed);
  j.at("per_book_n").get_to(s.per_book_n);
  j.at("chunks").get_to(s.chunks);
}

// Samples every book in a chunk store independently.
inline Sample draw_sample(const std::vector<Chunk>& store, std::size_t per_book_n, std::uint64_t seed) {
  std::map<std::string, std::vector<Chunk>> by_book;
  for (const auto& c : store) by_book[c.book_id].push_back(c);
  Sample s;
  s.seed = seed;
  s.per_book_n = per_book_n;
  for (auto& [book, chunks] : by_book) {
    std::sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) { return a.chunk_index < b.chunk_index; });
    for (const auto& c : sample_chunks(chunks, per_book_n, seed)) s.chunks.push_back({c.book_id, c.chunk_index});
  }
  return s;
}

}  // namespace attribeval
