#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "attribeval/pipeline.hpp"

namespace {

constexpr int kStageFailed = 1;
constexpr int kUsage = 2;

int run(const std::string& stage, const std::string& config_path, const std::string& model,
        std::optional<std::uint64_t> seed, const std::string& out) {
  using namespace attribeval;
  auto config = load_run_config(config_path);
  if (!out.empty()) config.output_dir = out;
  if (seed) config.sample.seed = config.seed = *seed;
  Pipeline p(std::move(config), std::cerr);

  if (stage == "ingest") {
    bool ok = true;
    for (const auto& b : p.ingest()) ok = ok && b.error.empty();
    return ok ? 0 : kStageFailed;
  }
  if (stage == "predict") {
    if (!model.empty()) {
      p.predict(model);
    } else {
      for (const auto& m : p.config().models) p.predict(m.model_name);
    }
    return 0;
  }
  if (stage == "sample") p.sample();
  else if (stage == "normalize") p.normalize();
  else if (stage == "adjudicate-export") p.adjudicate_export();
  else if (stage == "adjudicate-import") p.adjudicate_import();
  else if (stage == "score") p.score();
  else if (stage == "report") p.report();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Authorship attribution evaluation pipeline"};
  app.set_version_flag("--version", std::string(attribeval::kToolVersion));
  app.require_subcommand(1, 1);

  std::string config_path, model, out;
  std::optional<std::uint64_t> seed;
  const char* stages[] = {"ingest",           "predict",           "sample", "normalize",
                          "adjudicate-export", "adjudicate-import", "score",  "report"};
  const char* help[] = {"chunk the books in the manifest",
                        "query a model (all models if --model is omitted)",
                        "draw the per-book evaluation sample",
                        "label sampled predictions",
                        "write a CSV for human review",
                        "merge human labels from the review CSV",
                        "compute per-book and aggregate scores",
                        "write JSON, CSV and SVG report files"};
  for (std::size_t k = 0; k < std::size(stages); ++k) {
    auto* sub = app.add_subcommand(stages[k], help[k]);
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--model", model, "model name from the config");
    sub->add_option("--seed", seed, "override the sampling seed");
    sub->add_option("--out", out, "override the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    return run(stage, config_path, model, seed, out);
  } catch (const attribeval::UsageError& e) {
    std::cerr << "attribeval " << stage << ": " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "attribeval " << stage << ": " << e.what() << '\n';
    return kStageFailed;
  }
}
