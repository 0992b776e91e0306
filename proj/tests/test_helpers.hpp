#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "attribeval/io.hpp"

namespace testing_util {

// Fresh per-test directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  static std::random_device rd;
  auto dir = std::filesystem::temp_directory_path() / ("attribeval-" + name + "-" + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path test_data() { return ATTRIBEVAL_TEST_DATA; }
inline std::filesystem::path repo_data() { return ATTRIBEVAL_REPO_DATA; }

// Copies the toy fixture into `dir` and points its config at the repo rules.
inline std::filesystem::path stage_toy(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::copy(test_data() / "toy", dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  auto cfg = attribeval::io::read_json(dir / "config.json");
  cfg["rules"] = (repo_data() / "rules.json").string();
  cfg["aliases"] = (repo_data() / "aliases.json").string();
  fs::remove_all(dir / "out");
  attribeval::io::write_file(dir / "config.json", attribeval::io::canonical(cfg));
  return dir / "config.json";
}

}  // namespace testing_util
