#pragma once

// Assembles scores, correlations, escalation counts and confusion matrices
// into one report, and writes it as JSON, CSV tables and SVG charts.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attribeval/corpus.hpp"
#include "attribeval/csv.hpp"
#include "attribeval/error.hpp"
#include "attribeval/io.hpp"
#include "attribeval/lifecycle.hpp"
#include "attribeval/metrics.hpp"
#include "attribeval/normalize.hpp"
#include "attribeval/stats.hpp"
#include "attribeval/svg.hpp"

namespace attribeval {

inline constexpr std::string_view kUnknownColumn = "unknown";

struct ConfusionRow {
  std::string book_id;
  std::string author_surname;
  std::map<std::string, std::size_t> cells;  // predicted surname or "unknown" -> count

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [_, v] : cells) n += v;
    return n;
  }
};

struct ConfusionMatrix {
  std::string model_name;
  std::vector<ConfusionRow> rows;
  std::vector<std::string> columns;  // predicted surnames ascending, then "unknown"

  // Distinct predicted surnames, i.e. columns other than "unknown".
  std::size_t distinct_predictions() const {
    return static_cast<std::size_t>(std::count_if(columns.begin(), columns.end(),
                                                  [](const std::string& c) { return c != kUnknownColumn; }));
  }
};

// Rows follow manifest order; books absent from the manifest are appended in
// book_id order with an empty surname.
inline ConfusionMatrix build_confusion(const std::vector<LabeledRecord>& records,
                                       const std::vector<BookManifestEntry>& manifest, std::string model_name = {}) {
  ConfusionMatrix m;
  m.model_name = model_name;
  std::map<std::string, ConfusionRow> rows;
  std::set<std::string> predicted;
  for (const auto& r : records) {
    if (m.model_name.empty()) m.model_name = r.model_name;
    if (r.model_name != m.model_name) continue;
    auto& row = rows[r.book_id];
    row.book_id = r.book_id;
    std::string column;
    if (r.label == Label::unknown || !r.predicted_name) {
      column = kUnknownColumn;
    } else {
      column = *r.predicted_name;
      predicted.insert(column);
    }
    ++row.cells[column];
  }
  for (const auto& e : manifest) {
    auto it = rows.find(e.book_id);
    if (it == rows.end()) continue;
    it->second.author_surname = e.author_surname;
    m.rows.push_back(std::move(it->second));
    rows.erase(it);
  }
  for (auto& [_, row] : rows) m.rows.push_back(std::move(row));
  m.columns.assign(predicted.begin(), predicted.end());
  m.columns.emplace_back(kUnknownColumn);
  return m;
}

struct FalsePredictions {
  std::string book_id;
  std::vector<std::pair<std::string, std::size_t>> top;  // count desc, surname asc
  std::optional<std::pair<std::string, std::size_t>> least;
};

// Incorrect predictions are the cells other than "unknown" and the row's
// ground-truth surname.
inline std::vector<FalsePredictions> top_false_predictions(const ConfusionMatrix& m, std::size_t k) {
  if (k < 1) throw UsageError("k must be >= 1");
  std::vector<FalsePredictions> out;
  for (const auto& row : m.rows) {
    std::vector<std::pair<std::string, std::size_t>> wrong;
    for (const auto& [name, count] : row.cells) {
      if (name == kUnknownColumn || name == row.author_surname || count == 0) continue;
      wrong.emplace_back(name, count);
    }
    std::sort(wrong.begin(), wrong.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    FalsePredictions fp;
    fp.book_id = row.book_id;
    if (!wrong.empty()) {
      auto least = wrong.back();
      for (const auto& w : wrong) {
        if (w.second == least.second) {
          least = w;
          break;
        }
      }
      fp.least = least;
    }
    if (wrong.size() > k) wrong.resize(k);
    fp.top = std::move(wrong);
    out.push_back(std::move(fp));
  }
  return out;
}

// A correlation that may be undefined (constant input); `note` says why.
struct MaybeCorrelation {
  std::optional<stats::CorrelationResult> value;
  std::string note;
};

inline MaybeCorrelation try_pearson(std::span<const double> x, std::span<const double> y) {
  try {
    return {stats::pearson_r(x, y), {}};
  } catch (const UsageError& e) {
    return {std::nullopt, e.what()};
  }
}

struct TrendlineRow {
  std::string book_id;
  std::string title;
  double normalized_downloads = 0.0;
  double normalized_frequency = 0.0;
  std::map<std::string, double> accuracy;  // model -> accuracy
};

struct TrendlineCorrelation {
  MaybeCorrelation vs_frequency;
  MaybeCorrelation vs_downloads;
};

struct Trendline {
  std::vector<std::string> models;
  std::vector<TrendlineRow> rows;  // manifest order
  std::map<std::string, TrendlineCorrelation> correlations;
};

inline Trendline trendline_data(const std::vector<BookManifestEntry>& manifest, const std::vector<BookScore>& scores) {
  if (manifest.empty()) throw UsageError("trendline needs a non-empty manifest");
  std::set<std::string> manifest_ids;
  for (const auto& e : manifest) manifest_ids.insert(e.book_id);
  std::map<std::string, std::map<std::string, double>> acc;  // model -> book -> acc
  for (const auto& s : scores) acc[s.model_name][s.book_id] = s.accuracy;

  Trendline t;
  for (const auto& [model, books] : acc) {
    std::set<std::string> ids;
    for (const auto& [b, _] : books) ids.insert(b);
    if (ids != manifest_ids) throw UsageError("scores for model '" + model + "' do not cover the manifest books");
    t.models.push_back(model);
  }

  std::vector<double> downloads, freq;
  for (const auto& e : manifest) {
    downloads.push_back(static_cast<double>(e.download_count));
    freq.push_back(static_cast<double>(e.wikipedia_frequency));
  }
  auto nd = stats::normalize_by_max(downloads);
  auto nf = stats::normalize_by_max(freq);
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    TrendlineRow row{manifest[k].book_id, manifest[k].title, nd[k], nf[k], {}};
    for (const auto& model : t.models) row.accuracy[model] = acc[model][manifest[k].book_id];
    t.rows.push_back(std::move(row));
  }
  for (const auto& model : t.models) {
    std::vector<double> a;
    for (const auto& row : t.rows) a.push_back(row.accuracy.at(model));
    t.correlations[model] = {try_pearson(a, nf), try_pearson(a, nd)};
  }
  return t;
}

struct EvalReport {
  nlohmann::json metadata;
  std::vector<BookManifestEntry> manifest;
  std::vector<BookScore> book_scores;  // (model, manifest order)
  std::vector<AggregateScore> aggregates;
  std::map<std::string, MaybeCorrelation> accuracy_vs_shi;
  Trendline trendline;
  std::map<std::string, std::vector<EscalationCounts>> escalation;
  std::vector<ConfusionMatrix> confusion;
  std::map<std::string, std::vector<FalsePredictions>> false_predictions;
};

inline constexpr std::size_t kTopFalse = 4;

struct ScoreTable {
  std::vector<BookScore> book_scores;  // by model name, then manifest order
  std::vector<AggregateScore> aggregates;
};

inline ScoreTable compute_scores(const std::vector<BookManifestEntry>& manifest,
                                 const std::vector<LabeledRecord>& labels) {
  if (labels.empty()) throw UsageError("labels store is empty; nothing to score");
  std::map<std::string, std::size_t> order;
  for (std::size_t k = 0; k < manifest.size(); ++k) order[manifest[k].book_id] = k;
  std::map<std::string, std::vector<BookScore>> per_model;
  for (const auto& [key, counts] : count_labels(labels)) {
    if (!order.count(key.second)) throw UsageError("labels reference book '" + key.second + "' not in the manifest");
    per_model[key.first].push_back(score_book(key.second, key.first, counts));
  }
  ScoreTable out;
  for (auto& [model, scores] : per_model) {
    std::sort(scores.begin(), scores.end(),
              [&](const BookScore& a, const BookScore& b) { return order[a.book_id] < order[b.book_id]; });
    out.aggregates.push_back(aggregate(scores));
    out.book_scores.insert(out.book_scores.end(), scores.begin(), scores.end());
  }
  return out;
}

// `predictions` may be empty for models whose prediction stores are not
// available; escalation stats are then omitted for that model.
inline EvalReport build_report(const std::vector<BookManifestEntry>& manifest,
                               const std::vector<LabeledRecord>& labels,
                               const std::map<std::string, std::vector<PredictionRecord>>& predictions,
                               nlohmann::json metadata) {
  if (labels.empty()) throw UsageError("labels store is empty; nothing to report");
  EvalReport rep;
  rep.metadata = std::move(metadata);
  rep.manifest = manifest;

  auto scores = compute_scores(manifest, labels);
  rep.book_scores = scores.book_scores;
  rep.aggregates = scores.aggregates;
  for (const auto& a : rep.aggregates) {
    const auto& model = a.model_name;
    std::vector<double> acc, sh;
    for (const auto& s : rep.book_scores) {
      if (s.model_name != model) continue;
      acc.push_back(s.accuracy);
      sh.push_back(s.shi);
    }
    rep.accuracy_vs_shi[model] = try_pearson(acc, sh);
    auto m = build_confusion(labels, manifest, model);
    rep.false_predictions[model] = top_false_predictions(m, kTopFalse);
    rep.confusion.push_back(std::move(m));
    auto p = predictions.find(model);
    if (p != predictions.end() && !p->second.empty()) rep.escalation[model] = escalation_stats(p->second);
  }
  rep.trendline = trendline_data(manifest, rep.book_scores);
  return rep;
}

namespace detail {

inline nlohmann::json to_json(const MaybeCorrelation& c) {
  if (!c.value) return {{"r", nullptr}, {"n", nullptr}, {"p_value", nullptr}, {"note", c.note}};
  return {{"r", c.value->r},
          {"n", c.value->n},
          {"p_value", c.value->p_value ? nlohmann::json(*c.value->p_value) : nlohmann::json()},
          {"note", c.note}};
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string opt3(const std::optional<double>& v) { return v ? fixed3(*v) : std::string(); }

inline std::string file_safe(std::string_view name) {
  std::string out;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '-' ||
              c == '_';
    out += ok ? c : '_';
  }
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["metadata"] = r.metadata;
  j["book_scores"] = r.book_scores;
  j["aggregates"] = r.aggregates;
  for (const auto& [model, c] : r.accuracy_vs_shi) j["correlations"][model]["accuracy_vs_shi"] = detail::to_json(c);
  for (const auto& [model, c] : r.trendline.correlations) {
    j["correlations"][model]["accuracy_vs_normalized_frequency"] = detail::to_json(c.vs_frequency);
    j["correlations"][model]["accuracy_vs_normalized_downloads"] = detail::to_json(c.vs_downloads);
  }
  j["trendline"] = nlohmann::json::array();
  for (const auto& row : r.trendline.rows) {
    j["trendline"].push_back({{"book_id", row.book_id},
                              {"title", row.title},
                              {"normalized_downloads", row.normalized_downloads},
                              {"normalized_frequency", row.normalized_frequency},
                              {"accuracy", row.accuracy}});
  }
  j["escalation"] = nlohmann::json::object();
  for (const auto& [model, rows] : r.escalation) j["escalation"][model] = rows;
  j["confusion"] = nlohmann::json::object();
  for (const auto& m : r.confusion) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : m.rows) {
      rows.push_back({{"book_id", row.book_id}, {"author_surname", row.author_surname}, {"cells", row.cells}});
    }
    nlohmann::json fps = nlohmann::json::array();
    for (const auto& fp : r.false_predictions.at(m.model_name)) {
      nlohmann::json top = nlohmann::json::array();
      for (const auto& [name, count] : fp.top) top.push_back({{"surname", name}, {"count", count}});
      fps.push_back({{"book_id", fp.book_id},
                     {"top", top},
                     {"least", fp.least ? nlohmann::json{{"surname", fp.least->first}, {"count", fp.least->second}}
                                        : nlohmann::json()}});
    }
    j["confusion"][m.model_name] = {{"columns", m.columns},
                                    {"rows", rows},
                                    {"distinct_predictions", m.distinct_predictions()},
                                    {"top_false_predictions", fps}};
  }
  return j;
}

enum class Format { json = 1, csv = 2, svg = 4 };
inline constexpr unsigned kAllFormats = 7;

// Writes the report into `dir`; returns the written paths in write order.
inline std::vector<std::filesystem::path> emit(const EvalReport& r, const std::filesystem::path& dir,
                                               unsigned formats = kAllFormats) {
  if (r.book_scores.empty()) throw UsageError("refusing to emit a report without scores (empty labels store)");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw EmitError("cannot create directory", dir.string());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& content) {
    auto p = dir / name;
    io::write_file(p, content);
    written.push_back(p);
  };
  auto wants = [&](Format f) { return (formats & static_cast<unsigned>(f)) != 0; };

  if (wants(Format::json)) put("report.json", io::canonical(to_json(r)));

  if (wants(Format::csv)) {
    std::vector<csv::Row> scores{{"model_name", "book_id", "c", "i", "u", "accuracy", "shi", "binary_h"}};
    for (const auto& s : r.book_scores) {
      scores.push_back({s.model_name, s.book_id, std::to_string(s.counts.c), std::to_string(s.counts.i),
                        std::to_string(s.counts.u), detail::fixed3(s.accuracy), detail::fixed3(s.shi),
                        detail::fixed3(s.binary_h)});
    }
    put("scores.csv", csv::format(scores));

    std::vector<csv::Row> agg{{"model_name", "books", "macro_accuracy", "micro_accuracy", "std_accuracy", "macro_shi",
                               "micro_shi", "std_shi", "mean_c", "mean_i", "mean_u"}};
    for (const auto& a : r.aggregates) {
      agg.push_back({a.model_name, std::to_string(a.books), detail::fixed3(a.macro_accuracy),
                     detail::fixed3(a.micro_accuracy), detail::opt3(a.std_accuracy), detail::fixed3(a.macro_shi),
                     detail::fixed3(a.micro_shi), detail::opt3(a.std_shi), detail::fixed3(a.mean_counts.c),
                     detail::fixed3(a.mean_counts.i), detail::fixed3(a.mean_counts.u)});
    }
    put("aggregates.csv", csv::format(agg));

    std::vector<csv::Row> corr{{"model_name", "pair", "r", "n", "p_value", "note"}};
    auto add_corr = [&](const std::string& model, const std::string& pair, const MaybeCorrelation& c) {
      if (!c.value) {
        corr.push_back({model, pair, "", "", "", c.note});
        return;
      }
      char p[32] = "";
      if (c.value->p_value) std::snprintf(p, sizeof p, "%.6g", *c.value->p_value);
      corr.push_back({model, pair, detail::fixed4(c.value->r), std::to_string(c.value->n), p, c.note});
    };
    for (const auto& [model, c] : r.accuracy_vs_shi) {
      add_corr(model, "accuracy_vs_shi", c);
      if (auto t = r.trendline.correlations.find(model); t != r.trendline.correlations.end()) {
        add_corr(model, "accuracy_vs_normalized_frequency", t->second.vs_frequency);
        add_corr(model, "accuracy_vs_normalized_downloads", t->second.vs_downloads);
      }
    }
    put("correlations.csv", csv::format(corr));

    csv::Row head{"book_id", "title", "normalized_downloads", "normalized_frequency"};
    for (const auto& m : r.trendline.models) head.push_back("accuracy_" + m);
    std::vector<csv::Row> trend{head};
    for (const auto& row : r.trendline.rows) {
      csv::Row out{row.book_id, row.title, detail::fixed3(row.normalized_downloads),
                   detail::fixed3(row.normalized_frequency)};
      for (const auto& m : r.trendline.models) out.push_back(detail::fixed3(row.accuracy.at(m)));
      trend.push_back(std::move(out));
    }
    put("trendline.csv", csv::format(trend));

    std::vector<csv::Row> esc{{"model_name", "book_id", "empty_after_1", "empty_after_2", "empty_after_3"}};
    for (const auto& [model, rows] : r.escalation) {
      for (const auto& e : rows) {
        esc.push_back({model, e.book_id, std::to_string(e.empty_after[0]), std::to_string(e.empty_after[1]),
                       std::to_string(e.empty_after[2])});
      }
    }
    put("escalation.csv", csv::format(esc));

    for (const auto& m : r.confusion) {
      csv::Row h{"book_id", "author_surname"};
      h.insert(h.end(), m.columns.begin(), m.columns.end());
      std::vector<csv::Row> rows{h};
      for (const auto& row : m.rows) {
        csv::Row out{row.book_id, row.author_surname};
        for (const auto& c : m.columns) {
          auto it = row.cells.find(c);
          out.push_back(std::to_string(it == row.cells.end() ? 0 : it->second));
        }
        rows.push_back(std::move(out));
      }
      put("confusion_" + detail::file_safe(m.model_name) + ".csv", csv::format(rows));
    }
  }

  if (wants(Format::svg)) {
    std::vector<std::string> books;
    for (const auto& row : r.trendline.rows) books.push_back(row.book_id);
    std::vector<svg::Series> trend{{"normalized downloads", {}}, {"normalized frequency", {}}};
    for (const auto& row : r.trendline.rows) {
      trend[0].values.push_back(row.normalized_downloads);
      trend[1].values.push_back(row.normalized_frequency);
    }
    for (const auto& m : r.trendline.models) {
      svg::Series s{"accuracy " + m, {}};
      for (const auto& row : r.trendline.rows) s.values.push_back(row.accuracy.at(m));
      trend.push_back(std::move(s));
    }
    put("trendline.svg", svg::line_chart("Normalized downloads, frequencies and accuracy", books, trend));

    for (const auto& a : r.aggregates) {
      std::vector<std::string> cats;
      svg::Series acc{"accuracy", {}}, sh{"SHI", {}}, bh{"BinaryH", {}};
      for (const auto& s : r.book_scores) {
        if (s.model_name != a.model_name) continue;
        cats.push_back(s.book_id);
        acc.values.push_back(s.accuracy);
        sh.values.push_back(s.shi);
        bh.values.push_back(s.binary_h);
      }
      const auto safe = detail::file_safe(a.model_name);
      put("accuracy_shi_" + safe + ".svg",
          svg::line_chart("Accuracy and hallucination: " + a.model_name, cats, {acc, sh, bh}));
    }

    // Per-book shares of: correct, unknown, the top false predictions, the
    // least frequent false prediction, and all remaining false predictions.
    for (const auto& m : r.confusion) {
      std::vector<svg::Series> parts{{"correct", {}}, {"unknown", {}}};
      for (std::size_t k = 1; k <= kTopFalse; ++k) parts.push_back({"false #" + std::to_string(k), {}});
      parts.push_back({"least false", {}});
      parts.push_back({"other false", {}});
      std::vector<std::string> cats;
      const auto& fps = r.false_predictions.at(m.model_name);
      for (std::size_t b = 0; b < m.rows.size(); ++b) {
        const auto& row = m.rows[b];
        const auto& fp = fps[b];
        cats.push_back(row.book_id);
        const double n = static_cast<double>(row.total());
        auto cell = [&](const std::string& name) {
          auto it = row.cells.find(name);
          return it == row.cells.end() ? 0.0 : static_cast<double>(it->second);
        };
        const double correct = cell(row.author_surname);
        const double unknown = cell(std::string(kUnknownColumn));
        double shown = 0.0;
        parts[0].values.push_back(correct / n);
        parts[1].values.push_back(unknown / n);
        for (std::size_t k = 0; k < kTopFalse; ++k) {
          double v = k < fp.top.size() ? static_cast<double>(fp.top[k].second) : 0.0;
          shown += v;
          parts[2 + k].values.push_back(v / n);
        }
        const bool least_shown =
            !fp.least || std::any_of(fp.top.begin(), fp.top.end(), [&](const auto& t) { return t.first == fp.least->first; });
        const double least = least_shown ? 0.0 : static_cast<double>(fp.least->second);
        parts[2 + kTopFalse].values.push_back(least / n);
        parts[3 + kTopFalse].values.push_back(std::max(0.0, n - correct - unknown - shown - least) / n);
      }
      put("confusion_" + detail::file_safe(m.model_name) + ".svg",
          svg::stacked_bar_chart("Prediction breakdown per book: " + m.model_name, cats, parts));
    }
  }
  return written;
}

}  // namespace attribeval
