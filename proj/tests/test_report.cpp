#include <gtest/gtest.h>

#include "attribeval/report.hpp"
#include "reference_data.hpp"
#include "test_helpers.hpp"

using namespace attribeval;

namespace {

LabeledRecord rec(const std::string& book, std::size_t idx, Label l, std::optional<std::string> name,
                  const std::string& model = "m") {
  return {book, idx, model, l, std::move(name), Provenance::automatic};
}

// Synthesizes labels reproducing the published per-book counts.
std::vector<LabeledRecord> published_labels() {
  std::vector<LabeledRecord> out;
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  for (const auto& m : refdata::kModels) {
    for (std::size_t b = 0; b < 10; ++b) {
      const auto& t = m.counts[b];
      std::size_t idx = 0;
      for (int k = 0; k < t.c; ++k) out.push_back(rec(refdata::kBooks[b], idx++, Label::correct, manifest[b].author_surname, m.name));
      for (int k = 0; k < t.i; ++k) {
        out.push_back(rec(refdata::kBooks[b], idx++, Label::incorrect, k % 3 ? "dickens" : "swift", m.name));
      }
      for (int k = 0; k < t.u; ++k) out.push_back(rec(refdata::kBooks[b], idx++, Label::unknown, std::nullopt, m.name));
    }
  }
  return out;
}

}  // namespace

TEST(Confusion, AllCorrectSingleColumn) {
  std::vector<BookManifestEntry> manifest{{"b", "T", "Jane Austen", "austen", "g", 1, 1, "s", std::nullopt}};
  auto m = build_confusion({rec("b", 0, Label::correct, "austen"), rec("b", 1, Label::correct, "austen")}, manifest);
  EXPECT_EQ(m.columns, (std::vector<std::string>{"austen", "unknown"}));
  EXPECT_EQ(m.rows[0].cells.at("austen"), 2u);
  EXPECT_EQ(m.distinct_predictions(), 1u);
}

TEST(Confusion, MixedRow) {
  std::vector<BookManifestEntry> manifest{{"b", "T", "Fyodor Dostoevsky", "dostoevsky", "g", 1, 1, "s", std::nullopt}};
  auto m = build_confusion({rec("b", 0, Label::correct, "dostoevsky"), rec("b", 1, Label::incorrect, "swift"),
                            rec("b", 2, Label::unknown, std::nullopt)},
                           manifest);
  EXPECT_EQ(m.columns, (std::vector<std::string>{"dostoevsky", "swift", "unknown"}));
  const auto& row = m.rows[0];
  EXPECT_EQ(row.cells.at("dostoevsky"), 1u);
  EXPECT_EQ(row.cells.at("swift"), 1u);
  EXPECT_EQ(row.cells.at("unknown"), 1u);
  EXPECT_EQ(row.total(), 3u);
  EXPECT_EQ(m.distinct_predictions(), 2u);
}

TEST(Confusion, RowSumsAndUnknownColumnMatchCounts) {
  auto labels = published_labels();
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  for (const auto& model : refdata::kModels) {
    auto m = build_confusion(labels, manifest, model.name);
    ASSERT_EQ(m.rows.size(), 10u);
    for (std::size_t b = 0; b < 10; ++b) {
      const auto& t = model.counts[b];
      EXPECT_EQ(m.rows[b].book_id, refdata::kBooks[b]);
      EXPECT_EQ(m.rows[b].total(), static_cast<std::size_t>(t.c + t.i + t.u));
      auto u = m.rows[b].cells.count("unknown") ? m.rows[b].cells.at("unknown") : 0;
      EXPECT_EQ(u, static_cast<std::size_t>(t.u));
    }
  }
}

TEST(TopFalse, OrderingTiesAndLeast) {
  ConfusionMatrix m;
  m.model_name = "m";
  m.rows.push_back({"b", "austen", {{"austen", 10}, {"unknown", 50}, {"swift", 3}, {"defoe", 3}, {"bronte", 5},
                                    {"scott", 1}, {"hardy", 1}, {"eliot", 2}}});
  m.rows.push_back({"c", "ibsen", {{"ibsen", 4}}});
  auto fp = top_false_predictions(m, 4);
  ASSERT_EQ(fp.size(), 2u);
  using P = std::pair<std::string, std::size_t>;
  EXPECT_EQ(fp[0].top, (std::vector<P>{{"bronte", 5}, {"defoe", 3}, {"swift", 3}, {"eliot", 2}}));
  EXPECT_EQ(fp[0].least, (P{"hardy", 1}));
  EXPECT_TRUE(fp[1].top.empty());
  EXPECT_FALSE(fp[1].least);
  EXPECT_THROW(top_false_predictions(m, 0), UsageError);
}

TEST(Trendline, PublishedCorrelations) {
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  auto scores = compute_scores(manifest, published_labels());
  auto t = trendline_data(manifest, scores.book_scores);
  ASSERT_EQ(t.rows.size(), 10u);
  EXPECT_EQ(t.rows[0].normalized_downloads, 1.0);
  EXPECT_EQ(t.rows[9].normalized_frequency, 1.0);
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& name = refdata::kModels[m].name;
    ASSERT_TRUE(t.correlations.at(name).vs_frequency.value);
    EXPECT_NEAR(t.correlations.at(name).vs_frequency.value->r, refdata::kAccFreqR[m], 0.05) << name;
    ASSERT_TRUE(t.correlations.at(name).vs_downloads.value);
  }
}

TEST(Trendline, MissingBookRejected) {
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  std::vector<BookScore> scores{score_book("pride-and-prejudice", "m", {1, 0, 0})};
  EXPECT_THROW(trendline_data(manifest, scores), UsageError);
}

TEST(Trendline, ConstantAccuracyGivesUndefinedCorrelation) {
  std::vector<BookManifestEntry> manifest{{"a", "A", "X Y", "y", "g", 10, 5, "s", std::nullopt},
                                          {"b", "B", "Z W", "w", "g", 20, 1, "s", std::nullopt},
                                          {"c", "C", "Q R", "r", "g", 5, 3, "s", std::nullopt}};
  std::vector<BookScore> scores{score_book("a", "m", {1, 0, 0}), score_book("b", "m", {2, 0, 0}),
                                score_book("c", "m", {3, 0, 0})};
  auto t = trendline_data(manifest, scores);
  EXPECT_FALSE(t.correlations.at("m").vs_frequency.value);
  EXPECT_FALSE(t.correlations.at("m").vs_frequency.note.empty());
}

TEST(Report, EmptyLabelsRefused) {
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  EXPECT_THROW(build_report(manifest, {}, {}, nlohmann::json::object()), UsageError);
  EvalReport empty;
  EXPECT_THROW(emit(empty, testing_util::scratch_dir("empty")), UsageError);
}

TEST(Report, EmitIsByteIdenticalAndJsonIsFixedPoint) {
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  auto labels = published_labels();
  auto rep = build_report(manifest, labels, {}, {{"tool", "test"}});
  auto d1 = testing_util::scratch_dir("emit1");
  auto d2 = testing_util::scratch_dir("emit2");
  auto f1 = emit(rep, d1);
  auto rep2 = build_report(manifest, labels, {}, {{"tool", "test"}});
  auto f2 = emit(rep2, d2);
  ASSERT_EQ(f1.size(), f2.size());
  // report.json, 5 tables, 3 confusion CSVs, trendline.svg, 3 + 3 model SVGs
  EXPECT_EQ(f1.size(), 1u + 5u + 3u + 1u + 6u);
  for (std::size_t k = 0; k < f1.size(); ++k) {
    EXPECT_EQ(f1[k].filename(), f2[k].filename());
    EXPECT_EQ(io::read_file(f1[k]), io::read_file(f2[k])) << f1[k];
  }
  auto text = io::read_file(d1 / "report.json");
  EXPECT_EQ(io::canonical(nlohmann::json::parse(text)), text);

  auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["confusion"]["mixtral-8x7b"]["distinct_predictions"], 9);
  EXPECT_NEAR(j["correlations"]["mixtral-8x7b"]["accuracy_vs_shi"]["r"].get<double>(), -0.9996, 0.0005);
  const auto svg = io::read_file(d1 / "confusion_gemma-7b.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Report, EmitSubsetOfFormats) {
  auto manifest = load_manifest(testing_util::repo_data() / "manifest.json");
  auto rep = build_report(manifest, published_labels(), {}, nlohmann::json::object());
  auto files = emit(rep, testing_util::scratch_dir("fmt"), static_cast<unsigned>(Format::json));
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0].filename(), "report.json");
}

TEST(Svg, EscapingAndFixedGeometry) {
  auto s = svg::line_chart("a <b> & \"c\"", {"x"}, {{"s", {0.5}}});
  EXPECT_NE(s.find("a &lt;b&gt; &amp; &quot;c&quot;"), std::string::npos);
  EXPECT_NE(s.find("width=\"880.00\""), std::string::npos);
  EXPECT_EQ(s, svg::line_chart("a <b> & \"c\"", {"x"}, {{"s", {0.5}}}));
}
