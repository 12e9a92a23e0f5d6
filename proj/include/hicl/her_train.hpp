#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hicl/corpus.hpp"
#include "hicl/embedder.hpp"
#include "hicl/embedding.hpp"
#include "hicl/llm.hpp"
#include "hicl/store.hpp"

namespace hicl {

// One contrastive training record mined from a hint: the retrieved example
// whose Q+A text best overlaps the hint, against a sampled low-overlap
// example from the same retrieved set.
struct Triplet {
  std::string query_id;
  std::string query_text;
  QAExample positive;
  QAExample negative;
  double f1_pos = 0.0;  // >= tau_pos
  double f1_neg = 0.0;  // <= tau_neg, so always < f1_pos
  std::string hint_text;
};

struct TripletBuildReport {
  int queries = 0;
  int triplets = 0;
  std::map<std::string, int> skipped;                        // reason -> count
  std::vector<std::pair<std::string, std::string>> failures; // query_id, detail
};

// One triplet per query. Retrieves top-k (the query's own id is excluded in
// case it is a corpus member), extracts a hint, then picks
//   positive: highest-overlap example meeting tau_pos, ties to the lower rank;
//   negative: seeded uniform pick among examples at or below tau_neg.
// Queries with None hints, an unsatisfiable side, or provider failures are
// skipped and counted in the report; the build itself always completes.
std::vector<Triplet> build_triplets(const std::vector<QAExample>& queries, const Corpus& corpus,
                                    const Index& index, CachingEmbedder& embedder, ChatClient& llm,
                                    const std::string& llm_model_id, int k, double tau_pos,
                                    double tau_neg, uint64_t seed,
                                    TripletBuildReport* report = nullptr);

std::string triplets_to_jsonl(const std::vector<Triplet>& triplets);
void write_triplets_jsonl(const std::string& path, const std::vector<Triplet>& triplets);
std::vector<Triplet> read_triplets_jsonl(const std::string& path);

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-5;
  int epochs = 5;
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double tau_pos = 0.5;
  double tau_neg = 0.1;
  double validation_fraction = 0.1;
  double temperature = 1.0;

  void validate() const;
  std::string hash() const;  // hex digest of the canonical field dump
};

// A triplet with all three texts already embedded (base embeddings; the
// projection head is applied at loss time).
struct EmbeddedTriplet {
  Vec query;
  Vec positive;
  Vec negative;
};

std::vector<EmbeddedTriplet> embed_triplets(const std::vector<Triplet>& triplets,
                                            Embedder& embedder);

// Mean InfoNCE over the batch. Each query is scored against its own positive
// and every hard negative in the batch (its own included); scores are
// projected cosines divided by the temperature.
double info_nce_loss(const ProjectionHead& head, const std::vector<EmbeddedTriplet>& batch,
                     double temperature);

// Exact analytic dLoss/dW via the chain rule through cosine-of-projections.
Mat loss_gradient(const ProjectionHead& head, const std::vector<EmbeddedTriplet>& batch,
                  double temperature);

struct LossAndGradient {
  double loss = 0.0;
  Mat grad;
};

// Loss and gradient from one shared forward pass (the training-loop entry).
LossAndGradient loss_with_gradient(const ProjectionHead& head,
                                   const std::vector<EmbeddedTriplet>& batch, double temperature);

// Bias-corrected Adam over the d x d weight matrix.
class AdamOptimizer {
 public:
  AdamOptimizer(int dim, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // In-place update; throws on non-finite gradient entries.
  void step(Mat& weights, const Mat& grad);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  Mat m_, v_;
};

struct RetrieverEval {
  double pairwise_accuracy = 0.0;  // fraction with s(q, pos) > s(q, neg)
  double mrr = 0.0;  // positive ranked against every validation negative
};

RetrieverEval evaluate_retriever(const ProjectionHead& head,
                                 const std::vector<EmbeddedTriplet>& validation);

struct Checkpoint {
  ProjectionHead head;
  int epoch = 0;
  double validation_metric = 0.0;  // pairwise accuracy on the held-out split
  std::string config_hash;
};

// Binary format: magic, format version, d, epoch, metric, base model id,
// config hash, then row-major little-endian 8-byte floats of W. Round-trips
// bit-exactly.
std::string checkpoint_to_bytes(const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct EpochStats {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double val_pairwise_accuracy = 0.0;
  double val_mrr = 0.0;
};

struct TrainResult {
  Checkpoint best;
  RetrieverEval baseline;  // identity head on the same validation split
  std::vector<EpochStats> history;
  int train_count = 0;
  int val_count = 0;
};

json history_to_json(const TrainResult& result, const std::string& base_model_id);

// Seeded split (the last validation_fraction of one shuffle is held out),
// per-epoch reshuffle of the rest, full batches only (trailing remainder
// dropped). The best epoch by validation pairwise accuracy wins, with MRR and
// then the earlier epoch as tiebreaks. When checkpoint_path is set the best
// checkpoint is persisted there with a ".history.json" sidecar.
TrainResult train(const TrainConfig& config, const std::vector<EmbeddedTriplet>& triplets,
                  const std::string& base_model_id, const std::string& checkpoint_path = "");

TrainResult train(const TrainConfig& config, const std::vector<Triplet>& triplets,
                  Embedder& embedder, const std::string& checkpoint_path = "");

}  // namespace hicl
