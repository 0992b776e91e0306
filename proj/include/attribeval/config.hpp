#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attribeval/backend.hpp"
#include "attribeval/corpus.hpp"
#include "attribeval/error.hpp"
#include "attribeval/io.hpp"
#include "attribeval/sampling.hpp"

namespace attribeval {

// Relative paths in the config file resolve against the file's directory.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path corpus_dir;
  std::size_t chunk_size = kDefaultChunkSize;
  std::vector<ModelConfig> models;
  SamplePlan sample;
  std::filesystem::path rules;
  std::optional<std::filesystem::path> aliases;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  const ModelConfig& model(const std::string& name) const {
    for (const auto& m : models) {
      if (m.model_name == name) return m;
    }
    throw UsageError("no model named '" + name + "' in config");
  }
};

inline void validate(const RunConfig& c) {
  namespace fs = std::filesystem;
  if (!fs::is_regular_file(c.manifest)) throw UsageError("manifest not found: " + c.manifest.string());
  if (!fs::is_regular_file(c.rules)) throw UsageError("rules file not found: " + c.rules.string());
  if (c.aliases && !fs::is_regular_file(*c.aliases)) throw UsageError("alias file not found: " + c.aliases->string());
  if (c.chunk_size < 1) throw UsageError("chunk_size must be >= 1");
  if (c.output_dir.empty()) throw UsageError("output_dir is empty");
  std::set<std::string> names;
  for (const auto& m : c.models) {
    validate(m);
    if (!names.insert(m.model_name).second) throw UsageError("duplicate model name: " + m.model_name);
    if (m.backend == "replay" && !fs::is_regular_file(m.fixture)) {
      throw UsageError(m.model_name + ": replay fixture not found: " + m.fixture);
    }
  }
  validate(c.sample);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  auto j = io::read_json(path);
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : (base / q).lexically_normal();
  };
  RunConfig c;
  try {
    c.manifest = resolve(j.at("manifest").get<std::string>());
    c.corpus_dir = resolve(j.value("corpus_dir", std::string("corpus")));
    c.chunk_size = j.value("chunk_size", kDefaultChunkSize);
    for (auto m : j.at("models")) {
      auto model = m.get<ModelConfig>();
      if (!model.fixture.empty()) model.fixture = resolve(model.fixture).string();
      c.models.push_back(std::move(model));
    }
    if (j.contains("sample")) c.sample = j.at("sample").get<SamplePlan>();
    c.rules = resolve(j.at("rules").get<std::string>());
    if (j.contains("aliases") && !j.at("aliases").is_null()) c.aliases = resolve(j.at("aliases").get<std::string>());
    c.output_dir = resolve(j.value("output_dir", std::string("out")));
    c.seed = j.value("seed", c.sample.seed);
    c.sample.seed = c.seed;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace attribeval
