#include <gtest/gtest.h>

#include <atomic>
#include <deque>
#include <mutex>
#include <random>

#include "attribeval/lifecycle.hpp"
#include "test_helpers.hpp"

using namespace attribeval;

namespace {

// Returns scripted outputs per chunk in order and counts calls.
using Script = std::map<std::pair<std::string, std::size_t>, std::vector<std::string>>;

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> script,
                           int parallel = 1)
      : script_(std::move(script)), parallel_(parallel) {}

  CompletionResponse complete(const std::string& prompt, const RequestKey& key) override {
    std::lock_guard lock(mu_);
    ++calls_;
    prompts_.push_back(prompt);
    keys_.push_back(key);
    if (fail_on_ && *fail_on_ == std::make_pair(key.book_id, key.chunk_index)) throw BackendError("boom", 500, 3);
    const auto& outs = script_.at({key.book_id, key.chunk_index});
    CompletionResponse r;
    r.text = outs.at(static_cast<std::size_t>(key.prompt_index - 1));
    return r;
  }
  int max_parallel() const override { return parallel_; }

  std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> script_;
  int parallel_;
  std::mutex mu_;
  int calls_ = 0;
  std::vector<std::string> prompts_;
  std::vector<RequestKey> keys_;
  std::optional<std::pair<std::string, std::size_t>> fail_on_;
};

ModelConfig replay_config(std::string name = "m") {
  ModelConfig c;
  c.model_name = std::move(name);
  c.backend = "replay";
  c.fixture = "unused";
  return c;
}

Chunk chunk(std::string book, std::size_t idx, std::string text = "some words here") {
  return {std::move(book), idx, std::move(text), 3};
}

}  // namespace

TEST(Prompts, RenderedExactly) {
  EXPECT_EQ(render_prompt(1, "abc"), "Who is the author of this text: 'abc'?");
  EXPECT_EQ(render_prompt(2, "abc"),
            "### Instruction: Following is a Question Answering task. As a helpful system, give a suitable response: "
            "Who is the author of this text: 'abc'?");
  EXPECT_EQ(render_prompt(3, "abc"),
            "### Instruction: Following is a Question Answering task. As a helpful system, give a suitable response: "
            "Who wrote this text: 'abc'?");
  EXPECT_THROW(render_prompt(0, "abc"), UsageError);
  EXPECT_THROW(render_prompt(4, "abc"), UsageError);
}

TEST(Prompts, ChunkWithBracesIsInsertedVerbatim) {
  EXPECT_EQ(render_prompt(1, "{txt} 'q'"), "Who is the author of this text: '{txt} 'q''?");
}

TEST(EmptyOutput, WhitespaceCounts) {
  EXPECT_TRUE(is_empty_output(""));
  EXPECT_TRUE(is_empty_output(" \n\t\xC2\xA0"));
  EXPECT_FALSE(is_empty_output(" x "));
}

TEST(PredictChunk, FirstAnswerStops) {
  ScriptedBackend b({{{"b", 0}, {"Jane Austen"}}});
  auto r = predict_chunk(b, replay_config(), chunk("b", 0));
  EXPECT_EQ(r.attempts.size(), 1u);
  EXPECT_EQ(r.final_text, "Jane Austen");
  EXPECT_EQ(b.calls_, 1);
}

TEST(PredictChunk, EscalatesOnEmpty) {
  ScriptedBackend b({{{"b", 0}, {"", "", "Melville"}}});
  auto r = predict_chunk(b, replay_config(), chunk("b", 0, "abc"));
  ASSERT_EQ(r.attempts.size(), 3u);
  EXPECT_EQ(r.final_text, "Melville");
  EXPECT_EQ(b.prompts_[0], render_prompt(1, "abc"));
  EXPECT_EQ(b.prompts_[1], render_prompt(2, "abc"));
  EXPECT_EQ(b.prompts_[2], render_prompt(3, "abc"));
  for (int k = 0; k < 3; ++k) EXPECT_EQ(r.attempts[static_cast<std::size_t>(k)].prompt_index, k + 1);
}

TEST(PredictChunk, ExhaustionGivesEmptyFinalText) {
  ScriptedBackend b({{{"b", 0}, {"", "  ", ""}}});
  auto r = predict_chunk(b, replay_config(), chunk("b", 0));
  EXPECT_EQ(r.attempts.size(), 3u);
  EXPECT_EQ(r.final_text, "");
}

TEST(PredictChunk, EmptyChunkRejected) {
  ScriptedBackend b({});
  EXPECT_THROW(predict_chunk(b, replay_config(), chunk("b", 0, "")), UsageError);
  EXPECT_EQ(b.calls_, 0);
}

TEST(PredictChunk, BackendFailureKeepsPartialRecord) {
  class FailSecond : public Backend {
   public:
    CompletionResponse complete(const std::string&, const RequestKey& key) override {
      if (key.prompt_index == 2) throw BackendError("down", 503, 3);
      return {};
    }
  } fail;
  try {
    predict_chunk(fail, replay_config(), chunk("b", 0));
    FAIL() << "expected LifecycleError";
  } catch (const LifecycleError& e) {
    ASSERT_EQ(e.partial().attempts.size(), 1u);
    EXPECT_EQ(e.partial().attempts[0].raw_text, "");
  }
}

TEST(PredictChunk, NeverEscalatesAfterNonEmptyProperty) {
  std::mt19937 rng(99);
  const std::vector<std::string> pool = {"", " ", "x", "Austen", "\n"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> outs(3);
    for (auto& o : outs) o = pool[rng() % pool.size()];
    ScriptedBackend b(Script{{{"b", 0}, outs}});
    auto r = predict_chunk(b, replay_config(), chunk("b", 0));
    for (std::size_t k = 0; k + 1 < r.attempts.size(); ++k) EXPECT_TRUE(is_empty_output(r.attempts[k].raw_text));
    if (r.attempts.size() < 3) EXPECT_FALSE(is_empty_output(r.attempts.back().raw_text));
    EXPECT_EQ(r.final_text, r.attempts.back().raw_text);
    EXPECT_EQ(static_cast<std::size_t>(b.calls_), r.attempts.size());
  }
}

TEST(Escalation, TwoRecordHandCount) {
  PredictionRecord a{"m", "b", 0, {{1, "", 0}, {2, "x", 0}}, "x"};
  PredictionRecord z{"m", "b", 1, {{1, "", 0}, {2, "", 0}, {3, "", 0}}, ""};
  auto s = escalation_stats({a, z});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].empty_after, (std::array<std::size_t, 3>{2, 1, 1}));
}

TEST(Escalation, AllAnsweredFirstTime) {
  PredictionRecord a{"m", "b", 0, {{1, "x", 0}}, "x"};
  PredictionRecord c{"m", "c", 0, {{1, "y", 0}}, "y"};
  auto s = escalation_stats({c, a});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].book_id, "b");
  EXPECT_EQ(s[0].empty_after, (std::array<std::size_t, 3>{0, 0, 0}));
}

TEST(Escalation, MonotoneColumnsProperty) {
  std::mt19937 rng(5);
  std::vector<PredictionRecord> recs;
  for (std::size_t k = 0; k < 200; ++k) {
    PredictionRecord r{"m", "b" + std::to_string(k % 3), k, {}, ""};
    std::size_t empties = rng() % 4;
    for (std::size_t e = 0; e < empties; ++e) r.attempts.push_back({static_cast<int>(e + 1), "", 0});
    if (empties < 3) r.attempts.push_back({static_cast<int>(empties + 1), "x", 0});
    r.final_text = r.attempts.back().raw_text;
    recs.push_back(r);
  }
  for (const auto& s : escalation_stats(recs)) {
    EXPECT_GE(s.empty_after[0], s.empty_after[1]);
    EXPECT_GE(s.empty_after[1], s.empty_after[2]);
  }
}

TEST(RunPredictions, WritesSortedStoreAndRemovesCheckpoint) {
  auto dir = testing_util::scratch_dir("run");
  std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> script;
  std::vector<Chunk> chunks;
  for (std::string book : {"c", "a", "b"}) {
    for (std::size_t k = 0; k < 4; ++k) {
      script[{book, k}] = {"", book + " answer"};
      chunks.push_back(chunk(book, k));
    }
  }
  ScriptedBackend b(script, 4);
  auto store = dir / "preds" / "m.jsonl";
  auto summary = run_predictions(b, replay_config(), chunks, store);
  EXPECT_EQ(summary.queried, 12u);
  EXPECT_EQ(summary.reused, 0u);
  EXPECT_EQ(b.calls_, 24);
  EXPECT_FALSE(std::filesystem::exists(checkpoint_path(store)));
  auto recs = read_prediction_store(store);
  ASSERT_EQ(recs.size(), 12u);
  EXPECT_TRUE(std::is_sorted(recs.begin(), recs.end(), record_order));
  EXPECT_EQ(recs.front().book_id, "a");

  // Serial run yields a byte-identical store.
  ScriptedBackend serial(script, 1);
  auto store2 = dir / "serial.jsonl";
  run_predictions(serial, replay_config(), chunks, store2);
  EXPECT_EQ(io::read_file(store), io::read_file(store2));

  // Second run reuses everything.
  ScriptedBackend again(script, 4);
  auto s2 = run_predictions(again, replay_config(), chunks, store);
  EXPECT_EQ(s2.reused, 12u);
  EXPECT_EQ(again.calls_, 0);
}

TEST(RunPredictions, ResumeAfterFailureMakesNoDuplicateCalls) {
  auto dir = testing_util::scratch_dir("resume");
  std::map<std::pair<std::string, std::size_t>, std::vector<std::string>> script;
  std::vector<Chunk> chunks;
  for (std::size_t k = 0; k < 10; ++k) {
    script[{"b", k}] = {"answer " + std::to_string(k)};
    chunks.push_back(chunk("b", k));
  }
  auto store = dir / "m.jsonl";
  ScriptedBackend first(script, 1);
  first.fail_on_ = std::make_pair(std::string("b"), std::size_t{6});
  EXPECT_THROW(run_predictions(first, replay_config(), chunks, store), LifecycleError);
  EXPECT_FALSE(std::filesystem::exists(store));
  ASSERT_TRUE(std::filesystem::exists(checkpoint_path(store)));
  std::set<std::size_t> done_first;
  for (const auto& k : first.keys_) {
    if (k.chunk_index != 6) done_first.insert(k.chunk_index);
  }
  EXPECT_EQ(done_first.size(), 6u);

  ScriptedBackend second(script, 1);
  auto summary = run_predictions(second, replay_config(), chunks, store);
  EXPECT_EQ(summary.reused, 6u);
  EXPECT_EQ(summary.queried, 4u);
  for (const auto& k : second.keys_) EXPECT_FALSE(done_first.count(k.chunk_index)) << k.chunk_index;
  EXPECT_EQ(read_prediction_store(store).size(), 10u);
  EXPECT_FALSE(std::filesystem::exists(checkpoint_path(store)));
}

TEST(RunPredictions, ParallelismRespected) {
  class Counting : public Backend {
   public:
    CompletionResponse complete(const std::string&, const RequestKey&) override {
      int now = ++in_flight;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --in_flight;
      return {"x", 0, {}};
    }
    int max_parallel() const override { return 3; }
    std::atomic<int> in_flight{0}, peak{0};
  } b;
  auto dir = testing_util::scratch_dir("par");
  std::vector<Chunk> chunks;
  for (std::size_t k = 0; k < 30; ++k) chunks.push_back(chunk("b", k));
  run_predictions(b, replay_config(), chunks, dir / "m.jsonl");
  EXPECT_LE(b.peak.load(), 3);
}

TEST(PredictionRecord, ValidateRejectsInconsistentRecords) {
  PredictionRecord ok{"m", "b", 0, {{1, "", 0}, {2, "x", 0}}, "x"};
  EXPECT_NO_THROW(validate(ok));
  auto bad = ok;
  bad.final_text = "y";
  EXPECT_THROW(validate(bad), UsageError);
  bad = ok;
  bad.attempts = {{1, "x", 0}, {2, "y", 0}};
  bad.final_text = "y";
  EXPECT_THROW(validate(bad), UsageError);
  bad = ok;
  bad.attempts.clear();
  EXPECT_THROW(validate(bad), UsageError);
}
