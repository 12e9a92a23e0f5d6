#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "hicl/embedder.hpp"
#include "hicl/eval.hpp"
#include "hicl/her_train.hpp"
#include "hicl/llm.hpp"
#include "hicl/util.hpp"

namespace hicl {

struct EmbedderSettings {
  std::string provider = "mock";  // mock | http
  std::string model_id;           // http; the mock derives its own from (dim, seed)
  int dim = 64;
  std::string endpoint;
};

struct LlmSettings {
  std::string provider = "mock";  // mock | http | replay
  std::string model_id = "mock";
  std::string script;  // mock rule file (optional)
  std::string default_response = "None";
  std::string endpoint;
  double temperature = 0.0;
  int concurrency = 1;     // accepted cap; execution is currently serial
  std::string replay_log;  // replay source; recording providers journal here too
};

struct HintSettings {
  int k = 5;
  double tau_attr = 0.3;
  int max_tokens = 256;
  std::string retriever = "base";  // base | her
  std::string checkpoint;          // her only; defaults to <out_dir>/her.ckpt
};

struct HerSettings {
  TrainConfig train;  // train.seed follows the global seed unless set explicitly
  int k = 10;         // retrieval depth for triplet mining
};

// The single configuration file behind every command. API tokens are read
// from the environment (HICL_API_KEY, or the provider-specific
// HICL_EMBED_API_KEY / HICL_LLM_API_KEY), never from this file.
struct PipelineConfig {
  std::string out_dir = "out";
  uint64_t seed = 0;
  std::string train_corpus;  // demonstration pool; also the hint/triplet queries
  std::string test_corpus;   // evaluation queries, ids disjoint from train
  EmbedderSettings embedder;
  LlmSettings llm;
  HintSettings hints;
  HerSettings her;
  ExperimentConfig experiment;
  bool her_seed_explicit = false;

  static PipelineConfig from_file(const std::string& path);
  static PipelineConfig from_json(const json& j);
  json to_json() const;
  void validate() const;

  std::string cache_path() const;
  std::string checkpoint_path() const;
  std::string replay_log_path() const;  // resolved journal/replay location
};

struct RuntimeOverrides {
  std::optional<std::string> out_dir;
  std::optional<uint64_t> seed;
  bool force_mock = false;            // --mock: both providers become mocks
  std::optional<std::string> replay;  // --replay <log>: serve the llm from a log
};

PipelineConfig apply_overrides(PipelineConfig config, const RuntimeOverrides& overrides);

// Provider factories. The chat client journals every completion to the
// replay log unless it is itself a replay client.
std::unique_ptr<CachingEmbedder> make_embedder(const PipelineConfig& config);
std::unique_ptr<ChatClient> make_chat_client(const PipelineConfig& config);

// Writes path only when absent or byte-identical; a differing existing file
// is an error, never silently replaced.
void write_artifact(const std::string& path, const std::string& content);

// The run-identity snapshot (corpus hashes, embedder/llm identity, hint and
// training parameters, seed). Every command checks it against the output
// directory before writing anything.
json config_snapshot(const PipelineConfig& config);

// Pipeline stages. Each returns the summary the CLI prints on stdout and
// throws hicl::Error on any failure.
json cmd_build_index(const PipelineConfig& config);
json cmd_extract_hints(const PipelineConfig& config);
json cmd_build_triplets(const PipelineConfig& config);
json cmd_train_her(const PipelineConfig& config);
json cmd_eval(const PipelineConfig& config);
// Renders every table/curve derivable from the persisted artifacts; performs
// no provider calls and no network I/O.
json cmd_report(const PipelineConfig& config);

}  // namespace hicl
