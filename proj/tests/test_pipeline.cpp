#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "attribeval/pipeline.hpp"
#include "test_helpers.hpp"

using namespace attribeval;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(ATTRIBEVAL_CLI) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + io::read_file(f);
  return all;
}

void run_all(Pipeline& p) {
  for (const auto& b : p.ingest()) ASSERT_TRUE(b.error.empty()) << b.error;
  for (const auto& m : p.config().models) p.predict(m.model_name);
  p.sample();
  p.normalize();
  p.adjudicate_export();
  p.score();
  p.report();
}

}  // namespace

TEST(Pipeline, ToyRunMatchesGoldenFiles) {
  auto dir = testing_util::scratch_dir("golden");
  auto cfg = testing_util::stage_toy(dir);
  std::ostringstream log;
  Pipeline p(load_run_config(cfg), log);
  run_all(p);
  const auto golden = testing_util::test_data() / "toy" / "golden";
  for (const char* name : {"scores.csv", "aggregates.csv", "escalation.csv", "trendline.csv", "correlations.csv",
                           "confusion_toy-alpha.csv", "confusion_toy-beta.csv"}) {
    EXPECT_EQ(io::read_file(p.paths().report_dir() / name), io::read_file(golden / name)) << name;
  }
  EXPECT_EQ(io::read_file(p.paths().adjudication()), io::read_file(golden / "adjudication.csv"));
  auto report = io::read_json(p.paths().report_dir() / "report.json");
  auto want = io::read_json(golden / "report.json");
  report.erase("metadata");
  want.erase("metadata");
  EXPECT_EQ(report, want);
}

TEST(Pipeline, EscalationCountsAreHandCounted) {
  auto dir = testing_util::scratch_dir("esc");
  std::ostringstream log;
  Pipeline p(load_run_config(testing_util::stage_toy(dir)), log);
  p.ingest();
  p.predict("toy-alpha");
  p.predict("toy-beta");
  auto alpha = escalation_stats(read_prediction_store(p.paths().predictions("toy-alpha")));
  auto beta = escalation_stats(read_prediction_store(p.paths().predictions("toy-beta")));
  using A = std::array<std::size_t, 3>;
  // Books sort as toy-austen, toy-ibsen, toy-melville.
  EXPECT_EQ(alpha[0].empty_after, (A{2, 1, 1}));
  EXPECT_EQ(alpha[1].empty_after, (A{1, 0, 0}));
  EXPECT_EQ(alpha[2].empty_after, (A{1, 1, 0}));
  EXPECT_EQ(beta[0].empty_after, (A{1, 1, 1}));
  EXPECT_EQ(beta[1].empty_after, (A{0, 0, 0}));
  EXPECT_EQ(beta[2].empty_after, (A{3, 2, 1}));
}

TEST(Pipeline, EveryStageIsDeterministic) {
  auto d1 = testing_util::scratch_dir("det1");
  auto d2 = testing_util::scratch_dir("det2");
  std::ostringstream log;
  Pipeline p1(load_run_config(testing_util::stage_toy(d1)), log);
  Pipeline p2(load_run_config(testing_util::stage_toy(d2)), log);
  run_all(p1);
  run_all(p2);
  EXPECT_EQ(slurp_dir(p1.paths().root), slurp_dir(p2.paths().root));
  // Re-running a stage with identical inputs leaves its output unchanged.
  auto before = io::read_file(p1.paths().chunks());
  p1.ingest();
  EXPECT_EQ(io::read_file(p1.paths().chunks()), before);
  auto labels = io::read_file(p1.paths().labels());
  p1.normalize();
  EXPECT_EQ(io::read_file(p1.paths().labels()), labels);
}

TEST(Pipeline, MissingPredecessorNamesStage) {
  auto dir = testing_util::scratch_dir("missing");
  std::ostringstream log;
  Pipeline p(load_run_config(testing_util::stage_toy(dir)), log);
  try {
    p.score();
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("labels store not found"), std::string::npos);
  }
  EXPECT_THROW(p.predict("toy-alpha"), UsageError);
  EXPECT_THROW(p.sample(), UsageError);
  EXPECT_THROW(p.report(), UsageError);
  EXPECT_THROW(p.predict("nope"), UsageError);
}

TEST(Pipeline, HumanLabelsFlowIntoScores) {
  auto dir = testing_util::scratch_dir("human");
  std::ostringstream log;
  Pipeline p(load_run_config(testing_util::stage_toy(dir)), log);
  p.ingest();
  for (const auto& m : p.config().models) p.predict(m.model_name);
  p.sample();
  p.normalize();
  p.adjudicate_export();
  auto rows = csv::parse(io::read_file(p.paths().adjudication()));
  // toy-alpha / toy-austen chunk 4 was auto-labeled incorrect (dickens).
  bool edited = false;
  for (auto& row : rows) {
    if (row[0] == "toy-alpha" && row[1] == "toy-austen" && row[2] == "4") {
      EXPECT_EQ(row[4], "incorrect");
      row[6] = "correct";
      edited = true;
    }
  }
  ASSERT_TRUE(edited);
  io::write_file(p.paths().adjudication(), csv::format(rows));
  EXPECT_THROW(p.adjudicate_export(), UsageError);  // would overwrite human labels
  p.adjudicate_import();
  auto scores = p.score();
  bool checked = false;
  for (const auto& s : scores["book_scores"]) {
    if (s["model_name"] == "toy-alpha" && s["book_id"] == "toy-austen") {
      EXPECT_EQ(s["counts"]["c"], 4);
      EXPECT_EQ(s["counts"]["i"], 0);
      checked = true;
    }
  }
  EXPECT_TRUE(checked);
  // normalize keeps the human label.
  p.normalize();
  bool kept = false;
  for (const auto& r : read_labels_store(p.paths().labels())) {
    if (r.model_name == "toy-alpha" && r.book_id == "toy-austen" && r.chunk_index == 4) {
      EXPECT_EQ(r.provenance, Provenance::human);
      EXPECT_EQ(r.label, Label::correct);
      EXPECT_EQ(r.predicted_name, "austen");
      kept = true;
    }
  }
  EXPECT_TRUE(kept);
}

TEST(Pipeline, InterruptedPredictResumesWithoutRepeats) {
  auto dir = testing_util::scratch_dir("interrupt");
  auto cfg_path = testing_util::stage_toy(dir);
  auto fixture = ReplayFixture::load(dir / "fixture.jsonl");
  // A truncated fixture makes the first run fail partway through.
  ReplayFixture partial;
  for (const auto& line : io::read_jsonl(dir / "fixture.jsonl")) {
    if (line["model_name"] == "toy-alpha" && line["book_id"] == "toy-melville") continue;
    partial.put({line["model_name"].get<std::string>(), line["book_id"].get<std::string>(),
                 line["chunk_index"].get<std::size_t>(), line["prompt_index"].get<int>()},
                line["text"].get<std::string>());
  }
  auto run = load_run_config(cfg_path);
  std::ostringstream log;
  Pipeline p(run, log);
  p.ingest();
  auto model = run.model("toy-alpha");
  model.max_parallel_requests = 1;
  auto chunks = read_chunk_store(p.paths().chunks());
  ReplayBackend first(partial, 1);
  EXPECT_THROW(run_predictions(first, model, chunks, p.paths().predictions("toy-alpha")), LifecycleError);
  const auto ckpt = checkpoint_path(p.paths().predictions("toy-alpha"));
  ASSERT_TRUE(fs::exists(ckpt));
  const auto done = read_prediction_store(ckpt).size();
  EXPECT_EQ(done, 10u);  // toy-austen and toy-ibsen sort before toy-melville

  struct Counting : Backend {
    explicit Counting(ReplayFixture f) : inner(std::move(f)) {}
    CompletionResponse complete(const std::string& prompt, const RequestKey& key) override {
      keys.push_back(key);
      return inner.complete(prompt, key);
    }
    ReplayBackend inner;
    std::vector<RequestKey> keys;
  } second(fixture);
  auto summary = run_predictions(second, model, chunks, p.paths().predictions("toy-alpha"));
  EXPECT_EQ(summary.reused, 10u);
  EXPECT_EQ(summary.queried, 5u);
  EXPECT_FALSE(second.keys.empty());
  for (const auto& k : second.keys) EXPECT_EQ(k.book_id, "toy-melville");
}

TEST(Cli, ExitCodes) {
  auto dir = testing_util::scratch_dir("cli");
  auto cfg = testing_util::stage_toy(dir).string();
  EXPECT_EQ(run_cli("score --config " + cfg), 2);
  EXPECT_EQ(run_cli("bogus --config " + cfg), 2);
  EXPECT_EQ(run_cli("ingest"), 2);
  EXPECT_EQ(run_cli("ingest --config " + (dir / "nope.json").string()), 2);
  EXPECT_EQ(run_cli("ingest --config " + cfg), 0);
  EXPECT_EQ(run_cli("predict --config " + cfg + " --model toy-beta"), 0);
  EXPECT_EQ(run_cli("predict --config " + cfg + " --model nope"), 2);
  EXPECT_TRUE(fs::exists(dir / "out" / "predictions" / "toy-beta.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "out" / "predictions" / "toy-alpha.jsonl"));
  EXPECT_EQ(run_cli("sample --config " + cfg + " --seed 7 --out " + (dir / "other").string()), 2);
}

TEST(Cli, BadBookPathFailsIngestAndNamesBook) {
  auto dir = testing_util::scratch_dir("badbook");
  auto cfg = testing_util::stage_toy(dir);
  auto manifest = io::read_json(dir / "manifest.json");
  manifest[1]["source"] = "books/does-not-exist.txt";
  io::write_file(dir / "manifest.json", io::canonical(manifest));
  EXPECT_EQ(run_cli("ingest --config " + cfg.string()), 1);
  std::ostringstream log;
  Pipeline p(load_run_config(cfg), log);
  auto results = p.ingest();
  EXPECT_FALSE(results[1].error.empty());
  EXPECT_NE(log.str().find("toy-melville: FAILED"), std::string::npos);
  EXPECT_FALSE(fs::exists(p.paths().chunks()));
}
