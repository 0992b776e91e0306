#pragma once

// Hallucination and attribution scores.
//
//   shi      = i / (c + i + u)         abstentions are not penalised
//   binary_h = (i + u) / (c + i + u)   abstentions count as errors
//   accuracy = c / (c + i + u)
//
// plus the classical confusion-matrix metrics and the METEOR F-mean used for
// comparison. Every ratio with a zero denominator throws.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "attribeval/error.hpp"
#include "attribeval/io.hpp"
#include "attribeval/normalize.hpp"
#include "attribeval/stats.hpp"

namespace attribeval {

struct LabelCounts {
  std::uint64_t c = 0;
  std::uint64_t i = 0;
  std::uint64_t u = 0;

  std::uint64_t total() const { return c + i + u; }
  LabelCounts& operator+=(const LabelCounts& o) {
    c += o.c;
    i += o.i;
    u += o.u;
    return *this;
  }
  bool operator==(const LabelCounts&) const = default;
};

struct BinaryConfusion {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

namespace detail {

inline double ratio(std::uint64_t num, std::uint64_t den, const char* what) {
  if (den == 0) throw UndefinedMetricError(std::string(what) + " is undefined: zero denominator");
  return static_cast<double>(num) / static_cast<double>(den);
}

inline std::uint64_t nonempty_total(const LabelCounts& k) {
  if (k.total() == 0) throw UsageError("label counts are all zero");
  return k.total();
}

}  // namespace detail

inline double shi(const LabelCounts& k) { return detail::ratio(k.i, detail::nonempty_total(k), "SHI"); }

inline double binary_h(const LabelCounts& k) {
  return detail::ratio(k.i + k.u, detail::nonempty_total(k), "BinaryH");
}

inline double attribution_accuracy(const LabelCounts& k) {
  return detail::ratio(k.c, detail::nonempty_total(k), "accuracy");
}

inline double unknown_rate(const LabelCounts& k) { return detail::ratio(k.u, detail::nonempty_total(k), "unknown rate"); }

inline double precision(const BinaryConfusion& m) { return detail::ratio(m.tp, m.tp + m.fp, "precision"); }

inline double recall(const BinaryConfusion& m) { return detail::ratio(m.tp, m.tp + m.fn, "recall"); }

inline double f1(const BinaryConfusion& m) {
  const double p = precision(m);
  const double r = recall(m);
  if (p + r == 0.0) throw UndefinedMetricError("F1 is undefined: precision + recall == 0");
  return 2.0 * p * r / (p + r);
}

inline double binary_accuracy(const BinaryConfusion& m) {
  return detail::ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn, "accuracy");
}

// 10PR / (R + 9P) scaled by (1 - penalty).
inline double meteor_fmean(double p, double r, double penalty) {
  if (penalty < 0.0 || penalty > 1.0) throw UsageError("METEOR penalty must lie in [0, 1]");
  const double den = r + 9.0 * p;
  if (!(den > 0.0)) throw UndefinedMetricError("METEOR F-mean is undefined: R + 9P == 0");
  return 10.0 * p * r / den * (1.0 - penalty);
}

struct BookScore {
  std::string book_id;
  std::string model_name;
  LabelCounts counts;
  double accuracy = 0.0;
  double shi = 0.0;
  double binary_h = 0.0;
};

inline BookScore score_book(std::string book_id, std::string model_name, const LabelCounts& counts) {
  return {std::move(book_id), std::move(model_name), counts, attribution_accuracy(counts), shi(counts),
          binary_h(counts)};
}

struct MeanCounts {
  double c = 0.0;
  double i = 0.0;
  double u = 0.0;
};

struct AggregateScore {
  std::string model_name;
  std::size_t books = 0;
  double macro_accuracy = 0.0;
  double micro_accuracy = 0.0;
  double macro_shi = 0.0;
  double micro_shi = 0.0;
  double macro_binary_h = 0.0;
  double micro_binary_h = 0.0;
  // Sample (n - 1) standard deviations over books; absent for a single book.
  std::optional<double> std_accuracy;
  std::optional<double> std_shi;
  MeanCounts mean_counts;
  LabelCounts pooled;
};

inline void to_json(nlohmann::json& j, const LabelCounts& k) { j = nlohmann::json{{"c", k.c}, {"i", k.i}, {"u", k.u}}; }

inline void from_json(const nlohmann::json& j, LabelCounts& k) {
  j.at("c").get_to(k.c);
  j.at("i").get_to(k.i);
  j.at("u").get_to(k.u);
}

inline void to_json(nlohmann::json& j, const BookScore& s) {
  j = nlohmann::json{{"book_id", s.book_id}, {"model_name", s.model_name}, {"counts", s.counts},
                     {"accuracy", s.accuracy}, {"shi", s.shi},               {"binary_h", s.binary_h}};
}

inline void from_json(const nlohmann::json& j, BookScore& s) {
  j.at("book_id").get_to(s.book_id);
  j.at("model_name").get_to(s.model_name);
  j.at("counts").get_to(s.counts);
  j.at("accuracy").get_to(s.accuracy);
  j.at("shi").get_to(s.shi);
  j.at("binary_h").get_to(s.binary_h);
}

inline void to_json(nlohmann::json& j, const AggregateScore& a) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j = nlohmann::json{{"model_name", a.model_name},
                     {"books", a.books},
                     {"macro_accuracy", a.macro_accuracy},
                     {"micro_accuracy", a.micro_accuracy},
                     {"macro_shi", a.macro_shi},
                     {"micro_shi", a.micro_shi},
                     {"macro_binary_h", a.macro_binary_h},
                     {"micro_binary_h", a.micro_binary_h},
                     {"std_accuracy", opt(a.std_accuracy)},
                     {"std_shi", opt(a.std_shi)},
                     {"mean_counts", {{"c", a.mean_counts.c}, {"i", a.mean_counts.i}, {"u", a.mean_counts.u}}},
                     {"pooled_counts", a.pooled}};
}

// Tallies labels per (model_name, book_id).
inline std::map<std::pair<std::string, std::string>, LabelCounts> count_labels(
    const std::vector<LabeledRecord>& records) {
  std::map<std::pair<std::string, std::string>, LabelCounts> out;
  for (const auto& r : records) {
    auto& k = out[{r.model_name, r.book_id}];
    switch (r.label) {
      case Label::correct: ++k.c; break;
      case Label::incorrect: ++k.i; break;
      case Label::unknown: ++k.u; break;
    }
  }
  return out;
}

// Macro = unweighted mean of per-book values; micro = ratio of pooled counts.
inline AggregateScore aggregate(const std::vector<BookScore>& scores) {
  if (scores.empty()) throw UsageError("aggregate needs at least one book score");
  AggregateScore a;
  a.model_name = scores.front().model_name;
  a.books = scores.size();
  std::vector<double> acc, sh, bh;
  for (const auto& s : scores) {
    if (s.model_name != a.model_name) throw UsageError("aggregate mixes models");
    acc.push_back(s.accuracy);
    sh.push_back(s.shi);
    bh.push_back(s.binary_h);
    a.pooled += s.counts;
  }
  a.macro_accuracy = stats::mean(acc);
  a.macro_shi = stats::mean(sh);
  a.macro_binary_h = stats::mean(bh);
  a.micro_accuracy = attribution_accuracy(a.pooled);
  a.micro_shi = shi(a.pooled);
  a.micro_binary_h = binary_h(a.pooled);
  if (scores.size() >= 2) {
    a.std_accuracy = stats::sample_std(acc);
    a.std_shi = stats::sample_std(sh);
  }
  const double n = static_cast<double>(scores.size());
  a.mean_counts = {static_cast<double>(a.pooled.c) / n, static_cast<double>(a.pooled.i) / n,
                   static_cast<double>(a.pooled.u) / n};
  return a;
}

}  // namespace attribeval
