#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hicl/pipeline.hpp"

namespace {

int fail(const std::string& type, const std::string& message) {
  const hicl::json err = {{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hint-enhanced in-context learning pipeline"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "pipeline configuration file (JSON)")
      ->required();
  std::string out_dir;
  auto* out_opt = app.add_option("--out", out_dir, "override the output directory");
  uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the global seed");
  bool mock = false;
  app.add_flag("--mock", mock, "force mock embedder and llm providers");
  std::string replay_log;
  auto* replay_opt =
      app.add_option("--replay", replay_log, "serve llm completions from a recorded log");

  app.add_subcommand("build-index", "embed the demonstration corpus and persist the cache");
  app.add_subcommand("extract-hints", "extract one hint per training query");
  app.add_subcommand("build-triplets", "mine contrastive training triplets from hints");
  app.add_subcommand("train-her", "train the retrieval projection head on the triplets");
  app.add_subcommand("eval", "run the configured experiment against the test queries");
  app.add_subcommand("report", "render tables and curves from persisted artifacts");

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    hicl::RuntimeOverrides overrides;
    if (out_opt->count() > 0) overrides.out_dir = out_dir;
    if (seed_opt->count() > 0) overrides.seed = seed;
    overrides.force_mock = mock;
    if (replay_opt->count() > 0) overrides.replay = replay_log;

    const hicl::PipelineConfig config =
        hicl::apply_overrides(hicl::PipelineConfig::from_file(config_path), overrides);

    hicl::json summary;
    if (command == "build-index") {
      summary = hicl::cmd_build_index(config);
    } else if (command == "extract-hints") {
      summary = hicl::cmd_extract_hints(config);
    } else if (command == "build-triplets") {
      summary = hicl::cmd_build_triplets(config);
    } else if (command == "train-her") {
      summary = hicl::cmd_train_her(config);
    } else if (command == "eval") {
      summary = hicl::cmd_eval(config);
    } else {
      summary = hicl::cmd_report(config);
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const hicl::TimeoutError& e) {
    return fail("timeout", e.what());
  } catch (const hicl::TransportError& e) {
    return fail("transport", e.what());
  } catch (const hicl::ProviderError& e) {
    return fail("provider", e.what());
  } catch (const hicl::LlmError& e) {
    return fail("llm", e.what());
  } catch (const hicl::Error& e) {
    return fail("error", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
