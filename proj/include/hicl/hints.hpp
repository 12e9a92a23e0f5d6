#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hicl/corpus.hpp"
#include "hicl/llm.hpp"
#include "hicl/store.hpp"

namespace hicl {

struct HintAttribution {
  std::string example_id;
  double overlap_f1 = 0.0;  // in [0, 1]
};

// A query-related statement extracted from the retrieved examples. none_flag
// marks the filtered "no information" response; such hints are never rendered
// into prompts and carry no attribution.
struct Hint {
  std::string query_id;
  std::string text;
  bool none_flag = false;
  std::vector<HintAttribution> source_attribution;  // one per shown example, rank order
  std::string model_id;
};

// The retrieved examples shown during extraction, ordered by rank.
struct ExampleSet {
  std::string query_id;
  std::vector<std::pair<QAExample, RetrievalResult>> entries;

  static ExampleSet from_results(const std::string& query_id, const Corpus& corpus,
                                 const std::vector<RetrievalResult>& results);
};

// The extraction instruction with [query] substituted, followed by the
// examples as "Q: .../A: ..." blocks separated by blank lines.
std::string render_hint_prompt(const std::string& query, const ExampleSet& examples);

// Trimmed, quotes/punctuation stripped, case-insensitive match against "none".
bool is_none_response(const std::string& response);

// Per shown example: max over answer aliases of
// token_f1(hint, question + " " + alias), in retrieval-rank order.
std::vector<HintAttribution> attribute_hint(const std::string& hint_text,
                                            const ExampleSet& examples);

Hint extract_hint(ChatClient& llm, const std::string& model_id, const std::string& query_id,
                  const std::string& query, const ExampleSet& examples, int max_tokens = 256);

// Smallest rank whose overlap reaches tau_attr; the attribution list must be
// in rank order. Empty when nothing qualifies.
std::optional<int> closest_hint_related_rank(const std::vector<HintAttribution>& attribution,
                                             double tau_attr);

std::string hints_to_jsonl(const std::vector<Hint>& hints);
void write_hints_jsonl(const std::string& path, const std::vector<Hint>& hints);
std::vector<Hint> read_hints_jsonl(const std::string& path);

}  // namespace hicl
