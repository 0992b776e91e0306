#pragma once

// Pipeline stages. Each stage reads its predecessor's files from the output
// directory and writes its own; nothing is carried between stages in memory.
//
//   ingest             -> chunks.jsonl
//   predict            -> predictions/<model>.jsonl
//   sample             -> sample.json
//   normalize          -> labels.jsonl
//   adjudicate-export  -> adjudication.csv
//   adjudicate-import  -> labels.jsonl (human rows merged)
//   score              -> scores.json
//   report             -> report/

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attribeval/backend.hpp"
#include "attribeval/config.hpp"
#include "attribeval/corpus.hpp"
#include "attribeval/lifecycle.hpp"
#include "attribeval/metrics.hpp"
#include "attribeval/normalize.hpp"
#include "attribeval/report.hpp"
#include "attribeval/sampling.hpp"

namespace attribeval {

inline constexpr std::string_view kToolName = "attribeval";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct StagePaths {
  std::filesystem::path root;

  std::filesystem::path chunks() const { return root / "chunks.jsonl"; }
  std::filesystem::path predictions(const std::string& model) const {
    return root / "predictions" / (detail::file_safe(model) + ".jsonl");
  }
  std::filesystem::path sample() const { return root / "sample.json"; }
  std::filesystem::path labels() const { return root / "labels.jsonl"; }
  std::filesystem::path adjudication() const { return root / "adjudication.csv"; }
  std::filesystem::path scores() const { return root / "scores.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

struct BookIngest {
  std::string book_id;
  std::size_t chunks = 0;
  bool boilerplate_warning = false;
  std::string error;  // empty on success
};

class Pipeline {
 public:
  Pipeline(RunConfig config, std::ostream& log) : config_(std::move(config)), log_(log), paths_{config_.output_dir} {
    validate(config_);
  }

  const RunConfig& config() const { return config_; }
  const StagePaths& paths() const { return paths_; }

  // Returns per-book results; the chunk store is written only when every
  // book succeeded.
  std::vector<BookIngest> ingest() {
    auto manifest = load_manifest(config_.manifest);
    std::vector<BookIngest> results;
    std::vector<Chunk> all;
    bool failed = false;
    for (const auto& entry : manifest) {
      BookIngest res{entry.book_id};
      try {
        auto raw = read_source(entry);
        auto chunks = chunk_raw_book(entry.book_id, raw, config_.chunk_size, &res.boilerplate_warning);
        res.chunks = chunks.size();
        all.insert(all.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
        log_ << entry.book_id << ": " << res.chunks << " chunks";
        if (entry.expected_chunks) {
          const double expected = static_cast<double>(*entry.expected_chunks);
          const double dev = expected > 0 ? (static_cast<double>(res.chunks) - expected) / expected : 0.0;
          log_ << " (reference " << *entry.expected_chunks << ", "
               << (std::abs(dev) <= 0.02 ? "within" : "outside") << " 2%)";
        }
        if (res.boilerplate_warning) log_ << " [warning: Gutenberg markers not found]";
        log_ << '\n';
      } catch (const Error& e) {
        res.error = e.what();
        failed = true;
        log_ << entry.book_id << ": FAILED: " << e.what() << '\n';
      }
      results.push_back(std::move(res));
    }
    if (!failed) write_chunk_store(paths_.chunks(), std::move(all));
    return results;
  }

  RunSummary predict(const std::string& model_name) {
    const auto& model = config_.model(model_name);
    auto chunks = read_chunks();
    const auto store = paths_.predictions(model.model_name);
    if (model.backend == "replay") {
      ReplayBackend backend(ReplayFixture::load(model.fixture), model.max_parallel_requests);
      return log_summary(model.model_name, run_predictions(backend, model, std::move(chunks), store));
    }
    HttpBackend http(model);
    if (model.fixture.empty()) return log_summary(model.model_name, run_predictions(http, model, std::move(chunks), store));
    ReplayFixture capture;
    if (std::filesystem::exists(model.fixture)) capture = ReplayFixture::load(model.fixture);
    RecordingBackend recording(http, capture);
    try {
      auto summary = run_predictions(recording, model, std::move(chunks), store);
      capture.save(model.fixture);
      return log_summary(model.model_name, summary);
    } catch (...) {
      capture.save(model.fixture);
      throw;
    }
  }

  Sample sample(std::optional<std::uint64_t> seed_override = std::nullopt) {
    auto chunks = read_chunks();
    const auto seed = seed_override.value_or(config_.sample.seed);
    auto s = draw_sample(chunks, config_.sample.per_book_n, seed);
    io::write_file(paths_.sample(), io::canonical(nlohmann::json(s)));
    log_ << "sampled " << s.chunks.size() << " chunks (per_book_n " << s.per_book_n << ", seed " << seed << ")\n";
    return s;
  }

  // Labels the sampled chunks of every configured model. Human-provenance
  // labels already in the labels store are kept.
  std::vector<LabeledRecord> normalize() {
    auto manifest = load_manifest(config_.manifest);
    auto s = read_sample();
    auto normalizer = make_normalizer(manifest);
    std::map<std::string, const BookManifestEntry*> truth;
    for (const auto& e : manifest) truth[e.book_id] = &e;

    std::vector<LabeledRecord> labels;
    for (const auto& model : config_.models) {
      std::map<ChunkRef, PredictionRecord> preds;
      for (auto& p : read_predictions(model.model_name)) preds[{p.book_id, p.chunk_index}] = std::move(p);
      std::vector<std::string> gaps;
      for (const auto& ref : s.chunks) {
        auto it = preds.find(ref);
        if (it == preds.end()) {
          gaps.push_back(ref.book_id + "#" + std::to_string(ref.chunk_index));
          continue;
        }
        auto t = truth.find(ref.book_id);
        if (t == truth.end()) throw UsageError("sampled book '" + ref.book_id + "' is not in the manifest");
        labels.push_back(normalizer.classify(it->second, *t->second));
      }
      if (!gaps.empty()) {
        throw UsageError(model.model_name + ": " + std::to_string(gaps.size()) +
                         " sampled chunk(s) have no prediction, first: " + gaps.front());
      }
    }
    if (std::filesystem::exists(paths_.labels())) {
      std::vector<LabeledRecord> human;
      for (auto& r : read_labels_store(paths_.labels())) {
        if (r.provenance == Provenance::human) human.push_back(std::move(r));
      }
      std::set<RecordKey> fresh;
      for (const auto& r : labels) fresh.insert(r.key());
      std::erase_if(human, [&](const LabeledRecord& r) { return !fresh.count(r.key()); });
      labels = merge_labels(std::move(labels), human);
    }
    write_labels_store(paths_.labels(), labels);
    log_ << "labeled " << labels.size() << " records\n";
    return labels;
  }

  void adjudicate_export() {
    auto labels = read_labels();
    auto s = read_sample();
    if (std::filesystem::exists(paths_.adjudication())) {
      for (const auto& r : import_adjudication(io::read_file(paths_.adjudication()))) {
        if (r.provenance == Provenance::human) {
          throw UsageError(paths_.adjudication().string() +
                           " already holds human labels; run adjudicate-import or move it aside");
        }
      }
    }
    FinalTexts texts;
    for (const auto& model : config_.models) {
      if (!std::filesystem::exists(paths_.predictions(model.model_name))) continue;
      for (const auto& p : read_prediction_store(paths_.predictions(model.model_name))) {
        texts[{p.model_name, p.book_id, p.chunk_index}] = p.final_text;
      }
    }
    io::write_file(paths_.adjudication(), export_for_adjudication(labels, s.chunks, texts));
    log_ << "wrote " << paths_.adjudication().string() << '\n';
  }

  std::vector<LabeledRecord> adjudicate_import() {
    auto labels = read_labels();
    if (!std::filesystem::exists(paths_.adjudication())) {
      throw UsageError("adjudication file not found (run adjudicate-export first): " + paths_.adjudication().string());
    }
    auto manifest = load_manifest(config_.manifest);
    std::map<std::string, std::string> surname;
    for (const auto& e : manifest) surname[e.book_id] = e.author_surname;
    auto imported = import_adjudication(io::read_file(paths_.adjudication()));
    std::size_t human = 0;
    for (auto& r : imported) {
      if (r.provenance != Provenance::human) continue;
      ++human;
      auto it = surname.find(r.book_id);
      if (it == surname.end()) throw UsageError("adjudicated book '" + r.book_id + "' is not in the manifest");
      if (r.label == Label::correct) r.predicted_name = it->second;
    }
    labels = merge_labels(std::move(labels), imported);
    write_labels_store(paths_.labels(), labels);
    log_ << "imported " << human << " human label(s)\n";
    return labels;
  }

  nlohmann::json score() {
    auto labels = read_labels();
    auto manifest = load_manifest(config_.manifest);
    auto scores = compute_scores(manifest, labels);
    nlohmann::json out{{"book_scores", scores.book_scores}, {"aggregates", scores.aggregates}};
    io::write_file(paths_.scores(), io::canonical(out));
    for (const auto& a : scores.aggregates) {
      log_ << a.model_name << ": macro acc " << detail::fixed3(a.macro_accuracy) << ", micro acc "
           << detail::fixed3(a.micro_accuracy) << ", macro SHI " << detail::fixed3(a.macro_shi) << ", micro SHI "
           << detail::fixed3(a.micro_shi) << '\n';
    }
    return out;
  }

  std::vector<std::filesystem::path> report(unsigned formats = kAllFormats) {
    auto labels = read_labels();
    if (!std::filesystem::exists(paths_.scores())) {
      throw UsageError("scores file not found (run score first): " + paths_.scores().string());
    }
    auto manifest = load_manifest(config_.manifest);
    std::map<std::string, std::vector<PredictionRecord>> preds;
    for (const auto& m : config_.models) {
      if (std::filesystem::exists(paths_.predictions(m.model_name))) {
        preds[m.model_name] = read_prediction_store(paths_.predictions(m.model_name));
      }
    }
    auto rep = build_report(manifest, labels, preds, metadata());
    auto files = emit(rep, paths_.report_dir(), formats);
    log_ << "wrote " << files.size() << " report files to " << paths_.report_dir().string() << '\n';
    return files;
  }

  nlohmann::json metadata() const {
    auto rules = Rules::load(config_.rules);
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : config_.models) {
      nlohmann::json j = m;
      j.erase("fixture");
      models.push_back(std::move(j));
    }
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"models", models},
            {"seed", config_.sample.seed},
            {"per_book_n", config_.sample.per_book_n},
            {"chunk_size", config_.chunk_size},
            {"rules", {{"sha256", rules.sha256()}, {"content", rules.to_json()}}},
            {"conventions",
             {{"std", "sample standard deviation (n - 1)"},
              {"macro", "unweighted mean of per-book values"},
              {"micro", "ratio of counts pooled over books"},
              {"p_value", "two-tailed Student t on n - 2 df, exact incomplete beta"},
              {"display_rounding", "3 decimals in CSV tables; JSON holds full precision"}}}};
  }

 private:
  std::string read_source(const BookManifestEntry& entry) {
    if (http::is_url(entry.source)) {
      auto cached = config_.corpus_dir / (entry.book_id + ".txt");
      if (std::filesystem::is_regular_file(cached)) return io::read_file(cached);
      return fetch_book(entry, config_.corpus_dir);
    }
    std::filesystem::path p(entry.source);
    if (p.is_relative()) p = config_.corpus_dir / p;
    if (!std::filesystem::is_regular_file(p)) throw UsageError("source file not found: " + p.string());
    return io::read_file(p);
  }

  RunSummary log_summary(const std::string& model, RunSummary s) {
    log_ << model << ": " << s.queried << " chunk(s) predicted, " << s.reused << " reused from checkpoint/store\n";
    return s;
  }

  Normalizer make_normalizer(const std::vector<BookManifestEntry>& manifest) const {
    auto aliases = AliasTable::from_manifest(manifest);
    if (config_.aliases) aliases.merge_json(io::read_json(*config_.aliases));
    return Normalizer(Rules::load(config_.rules), std::move(aliases));
  }

  std::vector<Chunk> read_chunks() const {
    if (!std::filesystem::exists(paths_.chunks())) {
      throw UsageError("chunk store not found (run ingest first): " + paths_.chunks().string());
    }
    return read_chunk_store(paths_.chunks());
  }

  Sample read_sample() const {
    if (!std::filesystem::exists(paths_.sample())) {
      throw UsageError("sample file not found (run sample first): " + paths_.sample().string());
    }
    return io::read_json(paths_.sample()).get<Sample>();
  }

  std::vector<PredictionRecord> read_predictions(const std::string& model) const {
    auto p = paths_.predictions(model);
    if (!std::filesystem::exists(p)) {
      throw UsageError("prediction store not found for model '" + model + "' (run predict first): " + p.string());
    }
    return read_prediction_store(p);
  }

  std::vector<LabeledRecord> read_labels() const {
    if (!std::filesystem::exists(paths_.labels())) {
      throw UsageError("labels store not found (run normalize first): " + paths_.labels().string());
    }
    return read_labels_store(paths_.labels());
  }

  RunConfig config_;
  std::ostream& log_;
  StagePaths paths_;
};

}  // namespace attribeval
