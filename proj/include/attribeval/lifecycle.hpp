#pragma once

// Prediction lifecycle: up to three prompts per chunk, escalating only while
// the model keeps returning empty output.

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "attribeval/backend.hpp"
#include "attribeval/corpus.hpp"
#include "attribeval/error.hpp"
#include "attribeval/io.hpp"
#include "attribeval/text.hpp"

namespace attribeval {

inline constexpr int kPromptCount = 3;
inline constexpr std::string_view kChunkPlaceholder = "{txt}";

inline constexpr std::array<std::string_view, kPromptCount> kPromptTemplates = {
    "Who is the author of this text: '{txt}'?",
    "### Instruction: Following is a Question Answering task. As a helpful system, give a suitable "
    "response: Who is the author of this text: '{txt}'?",
    "### Instruction: Following is a Question Answering task. As a helpful system, give a suitable "
    "response: Who wrote this text: '{txt}'?",
};

inline std::string render_prompt(int index, std::string_view txt) {
  if (index < 1 || index > kPromptCount) {
    throw UsageError("prompt index must be in 1.." + std::to_string(kPromptCount) + ", got " + std::to_string(index));
  }
  std::string_view tmpl = kPromptTemplates[static_cast<std::size_t>(index - 1)];
  auto at = tmpl.find(kChunkPlaceholder);
  std::string out;
  out.reserve(tmpl.size() + txt.size());
  out.append(tmpl.substr(0, at));
  out.append(txt);
  out.append(tmpl.substr(at + kChunkPlaceholder.size()));
  return out;
}

// Whitespace-only output counts as empty.
inline bool is_empty_output(std::string_view s) { return text::is_blank(s); }

struct Attempt {
  int prompt_index = 1;
  std::string raw_text;
  double latency = 0.0;

  bool operator==(const Attempt&) const = default;
};

struct PredictionRecord {
  std::string model_name;
  std::string book_id;
  std::size_t chunk_index = 0;
  std::vector<Attempt> attempts;
  std::string final_text;

  bool operator==(const PredictionRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const Attempt& a) {
  j = nlohmann::json{{"prompt_index", a.prompt_index}, {"raw_text", a.raw_text}, {"latency", a.latency}};
}

inline void from_json(const nlohmann::json& j, Attempt& a) {
  j.at("prompt_index").get_to(a.prompt_index);
  j.at("raw_text").get_to(a.raw_text);
  a.latency = j.value("latency", 0.0);
}

inline void to_json(nlohmann::json& j, const PredictionRecord& r) {
  j = nlohmann::json{{"model_name", r.model_name},
                     {"book_id", r.book_id},
                     {"chunk_index", r.chunk_index},
                     {"attempts", r.attempts},
                     {"final_text", r.final_text}};
}

inline void from_json(const nlohmann::json& j, PredictionRecord& r) {
  j.at("model_name").get_to(r.model_name);
  j.at("book_id").get_to(r.book_id);
  j.at("chunk_index").get_to(r.chunk_index);
  j.at("attempts").get_to(r.attempts);
  j.at("final_text").get_to(r.final_text);
}

// Checks the structural invariants of a finished record.
inline void validate(const PredictionRecord& r) {
  const auto n = r.attempts.size();
  if (n < 1 || n > kPromptCount) throw UsageError("prediction record must have 1..3 attempts");
  for (std::size_t k = 0; k < n; ++k) {
    if (r.attempts[k].prompt_index != static_cast<int>(k) + 1) {
      throw UsageError("prediction attempts must use prompts 1, 2, 3 in order");
    }
    if (k + 1 < n && !is_empty_output(r.attempts[k].raw_text)) {
      throw UsageError("non-final attempt has non-empty output");
    }
  }
  if (r.final_text != r.attempts.back().raw_text) throw UsageError("final_text differs from last attempt");
}

// Backend failure mid-chunk; `partial` holds the attempts that completed.
class LifecycleError : public Error {
 public:
  LifecycleError(std::string message, PredictionRecord partial)
      : Error(std::move(message)), partial_(std::move(partial)) {}
  const PredictionRecord& partial() const noexcept { return partial_; }

 private:
  PredictionRecord partial_;
};

inline PredictionRecord predict_chunk(Backend& backend, const ModelConfig& config, const Chunk& chunk) {
  if (chunk.text.empty()) throw UsageError("cannot predict an empty chunk");
  PredictionRecord rec;
  rec.model_name = config.model_name;
  rec.book_id = chunk.book_id;
  rec.chunk_index = chunk.chunk_index;
  for (int index = 1; index <= kPromptCount; ++index) {
    RequestKey key{config.model_name, chunk.book_id, chunk.chunk_index, index};
    CompletionResponse response;
    try {
      response = backend.complete(render_prompt(index, chunk.text), key);
    } catch (const Error& e) {
      throw LifecycleError(chunk.book_id + "#" + std::to_string(chunk.chunk_index) + " prompt " +
                               std::to_string(index) + ": " + e.what(),
                           rec);
    }
    rec.attempts.push_back({index, response.text, response.latency});
    if (!is_empty_output(response.text)) break;
  }
  rec.final_text = rec.attempts.back().raw_text;
  return rec;
}

// empty_after[k] = chunks still empty after prompt k+1, i.e. chunks with at
// least k+1 recorded empty attempts.
struct EscalationCounts {
  std::string book_id;
  std::array<std::size_t, kPromptCount> empty_after{};

  bool operator==(const EscalationCounts&) const = default;
};

inline void to_json(nlohmann::json& j, const EscalationCounts& e) {
  j = nlohmann::json{{"book_id", e.book_id}, {"empty_after", e.empty_after}};
}

// One entry per book, ordered by book_id.
inline std::vector<EscalationCounts> escalation_stats(const std::vector<PredictionRecord>& records) {
  std::map<std::string, EscalationCounts> by_book;
  for (const auto& r : records) {
    auto& counts = by_book[r.book_id];
    counts.book_id = r.book_id;
    std::size_t empties = 0;
    for (const auto& a : r.attempts) {
      if (is_empty_output(a.raw_text)) ++empties;
    }
    for (std::size_t k = 0; k < std::min<std::size_t>(empties, kPromptCount); ++k) ++counts.empty_after[k];
  }
  std::vector<EscalationCounts> out;
  for (auto& [_, c] : by_book) out.push_back(std::move(c));
  return out;
}

inline bool record_order(const PredictionRecord& a, const PredictionRecord& b) {
  return std::tie(a.model_name, a.book_id, a.chunk_index) < std::tie(b.model_name, b.book_id, b.chunk_index);
}

inline void write_prediction_store(const std::filesystem::path& path, std::vector<PredictionRecord> records) {
  std::sort(records.begin(), records.end(), record_order);
  io::write_jsonl(path, records);
}

inline std::vector<PredictionRecord> read_prediction_store(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for (const auto& row : io::read_jsonl(path)) out.push_back(row.get<PredictionRecord>());
  return out;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& store) {
  auto p = store;
  p += ".checkpoint";
  return p;
}

struct RunSummary {
  std::size_t reused = 0;   // records taken from an existing store or checkpoint
  std::size_t queried = 0;  // chunks predicted in this run
};

// Predicts every chunk for one model and writes the prediction store.
//
// Each finished chunk is appended to <store>.checkpoint as soon as it
// completes; a later run skips chunks already present in the store or the
// checkpoint. The store itself is written only once every chunk succeeded,
// sorted by (model_name, book_id, chunk_index). On failure the checkpoint is
// kept and the first error is rethrown after in-flight chunks drain.
inline RunSummary run_predictions(Backend& backend, const ModelConfig& config, std::vector<Chunk> chunks,
                                  const std::filesystem::path& store) {
  std::sort(chunks.begin(), chunks.end(), [](const Chunk& a, const Chunk& b) {
    return std::tie(a.book_id, a.chunk_index) < std::tie(b.book_id, b.chunk_index);
  });

  std::map<std::pair<std::string, std::size_t>, PredictionRecord> done;
  auto absorb = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) return;
    for (auto& r : read_prediction_store(p)) {
      if (r.model_name == config.model_name) done[{r.book_id, r.chunk_index}] = std::move(r);
    }
  };
  absorb(store);
  const auto ckpt = checkpoint_path(store);
  absorb(ckpt);

  std::vector<const Chunk*> pending;
  std::set<std::pair<std::string, std::size_t>> wanted;
  for (const auto& c : chunks) {
    wanted.insert({c.book_id, c.chunk_index});
    if (!done.count({c.book_id, c.chunk_index})) pending.push_back(&c);
  }

  RunSummary summary;
  summary.reused = chunks.size() - pending.size();

  std::mutex mu;
  std::exception_ptr first_error;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  if (!pending.empty()) {
    if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
    std::ofstream checkpoint(ckpt, std::ios::app | std::ios::binary);
    if (!checkpoint) throw EmitError("cannot open checkpoint", ckpt.string());

    auto worker = [&] {
      while (!stop.load()) {
        std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        try {
          auto rec = predict_chunk(backend, config, *pending[i]);
          std::lock_guard lock(mu);
          checkpoint << nlohmann::json(rec).dump() << '\n';
          checkpoint.flush();
          done[{rec.book_id, rec.chunk_index}] = std::move(rec);
          ++summary.queried;
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first_error) first_error = std::current_exception();
          stop = true;
        }
      }
    };
    const auto workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, backend.max_parallel())), 1,
                                                 pending.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<PredictionRecord> records;
  for (auto& [key, rec] : done) {
    if (wanted.count(key)) records.push_back(std::move(rec));
  }
  write_prediction_store(store, std::move(records));
  std::error_code ec;
  std::filesystem::remove(ckpt, ec);
  return summary;
}

}  // namespace attribeval
