#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hicl/corpus.hpp"
#include "hicl/embedder.hpp"
#include "hicl/hints.hpp"
#include "hicl/llm.hpp"
#include "hicl/metrics.hpp"
#include "hicl/store.hpp"

namespace hicl {

enum class Method { zero_shot, standard_icl, recite, hicl };
enum class OrderPolicy { default_order, reverse, random };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string order_policy_name(OrderPolicy p);
OrderPolicy order_policy_from_name(const std::string& name);

using RankedExample = std::pair<QAExample, RetrievalResult>;

// Retrieval order (rank 1 first) to prompt order. default renders the most
// similar example last, adjacent to the query; reverse is the exact reversal
// of default; random is a seeded uniform permutation.
std::vector<RankedExample> order_examples(const std::vector<RankedExample>& ranked,
                                          OrderPolicy policy, uint64_t seed = 0);

// "Q: ...\nA: ..." blocks in prompt order, blank-line separated; each shows
// the example's first answer alias.
std::string render_demonstrations(const std::vector<RankedExample>& ordered);

// The final answer prompt. standard_icl: demonstrations then the query block
// "Q: {query}\nA:". hicl: a "Hint: ..." block immediately before the query
// block; without a hint it falls back to standard rendering unless
// allow_fallback is off. zero_shot: the query block alone. recite: the hint
// slot carries the stage-1 recitation, rendered as a "Passage: ..." block.
std::string render_answer_prompt(Method method, const std::vector<RankedExample>& ordered,
                                 const std::optional<std::string>& hint, const std::string& query,
                                 bool allow_fallback = true);

// Stage 1 of recite: ask the model for a passage from its own memory.
std::string render_recite_stage1(const std::string& query);

// Completion text up to the first newline, trimmed.
std::string extract_answer(const std::string& completion);

struct EvalScores {
  double em = 0.0;  // 0-100
  double f1 = 0.0;  // 0-100, >= em under the shared normalization
  int n = 0;
};

struct ExperimentConfig {
  Method method = Method::standard_icl;
  int shots = 5;
  OrderPolicy ordering = OrderPolicy::default_order;
  uint64_t order_seed = 0;  // random ordering only
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  int n_queries = 300;  // per seed; capped at the test-set size
  std::string retriever = "base";  // "base" or "her"
  std::string her_checkpoint;      // required when retriever == "her"
  double tau_attr = 0.3;
  std::string llm_model_id = "mock";
  int max_tokens = 64;

  void validate() const;
  int effective_shots() const;  // zero_shot always runs with 0 shots
};

struct Transcript {
  std::string query_id;
  std::string question;
  std::vector<std::string> golds;
  std::string prompt;
  std::string raw_response;
  std::string answer;
  double em = 0.0;  // 0 or 1
  double f1 = 0.0;  // [0, 1]
  std::vector<std::string> demo_ids;    // prompt order
  std::vector<std::string> demo_texts;  // question + " " + shown answer, prompt order
  std::optional<std::string> hint_text; // hicl hint or recite passage
  bool hint_none = false;               // hicl extraction returned None (fell back)
  std::optional<int> hint_rank;         // closest hint-related retrieval rank
  std::string error;                    // non-empty marks a failed query
  uint64_t seed = 0;
};

struct SeedRun {
  uint64_t seed = 0;
  EvalScores scores;
  std::vector<Transcript> transcripts;
  int failures = 0;
  bool complete = true;
};

struct ExperimentReport {
  ExperimentConfig config;  // effective configuration echo
  std::vector<SeedRun> seed_runs;
  EvalScores mean;  // arithmetic mean of the per-seed scores
};

// Per seed: a seeded sample of the test queries (a pure function of seed and
// test set, so every method sees the same sample), retrieval, optional hint
// extraction on the retrieval-ordered set, rendering, completion, scoring.
// Failed queries are recorded in their transcripts and excluded from scores;
// a seed with any failure is marked incomplete. Test-query ids must not
// appear in the demonstration corpus.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<QAExample>& test_queries, const Corpus& corpus,
                                const Index& index, CachingEmbedder& embedder, ChatClient& llm,
                                const ProjectionHead* head = nullptr);

struct CoverageStats {
  int total = 0;    // scored transcripts examined
  int covered = 0;  // some gold alias appears contiguously in a demonstration
  double coverage = 0.0;   // covered / total
  double subset_em = 0.0;  // EM restricted to the covered subset, as a fraction
};

// A query counts as covered when some gold alias's normalized token sequence
// occurs contiguously in a demonstration's normalized question+answer text.
CoverageStats coverage_report(const std::vector<Transcript>& transcripts);

struct RankHistogram {
  std::map<int, int> by_rank;  // closest hint-related rank -> count
  int none = 0;                // no shown example reaches the threshold
  int total() const;
};

// None-flagged hints are skipped (they attribute to nothing by construction).
RankHistogram rank_histogram(const std::vector<Hint>& hints, double tau_attr);

json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const json& j);
json report_to_json(const ExperimentReport& report);
json transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const json& j);
std::string transcripts_to_jsonl(const ExperimentReport& report);
std::vector<Transcript> read_transcripts_jsonl(const std::string& path);

}  // namespace hicl
