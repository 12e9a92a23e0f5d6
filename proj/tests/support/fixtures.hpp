#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hicl/corpus.hpp"
#include "hicl/embedder.hpp"
#include "hicl/her_train.hpp"
#include "hicl/util.hpp"

namespace fixtures {

// Unique self-deleting directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& label = "case");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& rel) const { return path_ + "/" + rel; }

 private:
  std::string path_;
};

// Embedder serving preset vectors by exact text; throws on unknown text so a
// test notices when something unexpected gets embedded.
class FixtureEmbedder : public hicl::Embedder {
 public:
  explicit FixtureEmbedder(int dim, std::string model_id = "fixture");

  void set(const std::string& text, hicl::Vec v);
  hicl::Vec embed(const std::string& text) override;
  const std::string& model_id() const override { return model_id_; }
  int dim() const override { return dim_; }

 private:
  int dim_;
  std::string model_id_;
  std::vector<std::pair<std::string, hicl::Vec>> by_text_;
};

// In-memory corpus with the id map and a synthetic content hash filled in.
hicl::Corpus make_corpus(std::vector<hicl::QAExample> examples);

hicl::QAExample qa(std::string id, std::string question, std::vector<std::string> answers);

hicl::Vec random_vec(hicl::DetRng& rng, int dim);

// Contrastive toy data: queries and positives share a low-dimensional signal
// subspace (negatives carry the opposite signal) under heavy noise in the
// complement, all behind a fixed random rotation. The identity head scores
// mid-range pairwise accuracy; a head that learns to suppress the noise
// subspace separates the triplets almost perfectly.
struct SyntheticSpec {
  int dim = 16;
  int signal_dims = 4;
  int count = 500;
  double noise_scale = 2.0;
  double jitter = 0.25;
  uint64_t seed = 20240817;
};

hicl::Mat random_rotation(int dim, hicl::DetRng& rng);
std::vector<hicl::EmbeddedTriplet> make_synthetic_triplets(const SyntheticSpec& spec);

// A demonstration pool plus test queries where the mock chat script plants a
// hint per query and only the hint unlocks the gold answer. Standard ICL gets
// the default "None" completion; the hinted prompt gets the gold.
struct PlantedFixture {
  hicl::Corpus corpus;
  std::vector<hicl::QAExample> test_queries;
  std::vector<std::pair<std::string, std::string>> hint_rules;
  std::vector<std::pair<std::string, std::string>> answer_rules;
};

PlantedFixture make_planted_fixture(int n_queries = 5, int n_demos = 6);

// File-backed pipeline fixture: a topic-clustered train corpus whose scripted
// hints overlap each query's sibling example (so triplet mining succeeds), a
// small test corpus where half the queries are answerable by script, and a
// config wired for mock providers.
struct PipelineFixture {
  std::string root;
  std::string config_path;
  std::string train_corpus_path;
  std::string test_corpus_path;
  std::string script_path;
  hicl::json config;
};

PipelineFixture build_pipeline_fixture(const std::string& root_dir);

// Re-serializes fx.config over the fixture's config file (test input, not a
// pipeline artifact, so plain overwrite is fine).
void rewrite_config(const PipelineFixture& fx);

std::string alien(const std::string& prefix, int topic);

void write_jsonl(const std::string& path, const std::vector<hicl::json>& lines);

}  // namespace fixtures
