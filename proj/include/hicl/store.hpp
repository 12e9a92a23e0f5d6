#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hicl/corpus.hpp"
#include "hicl/embedder.hpp"
#include "hicl/embedding.hpp"

namespace hicl {

struct RetrievalResult {
  std::string example_id;
  double score = 0.0;  // cosine similarity
  int rank = 0;        // 1-based, scores non-increasing, ties by ascending id
};

struct IndexBuildStats {
  size_t examples = 0;
  int dim = 0;
  size_t new_embeddings = 0;  // backend calls this build (0 on a warm cache)
};

// Exact brute-force cosine index over example questions. Immutable after
// build; reads are safe to share.
class Index {
 public:
  // Embeds every question exactly once (cache permitting). When cache_path is
  // non-empty, vectors are persisted there with a plain-text manifest beside
  // them and reused on rebuild if corpus hash, embedder id and dim match.
  static Index build(const Corpus& corpus, CachingEmbedder& embedder,
                     const std::string& cache_path = "", IndexBuildStats* stats = nullptr);

  // Top-k by cosine similarity; exactly min(k, N) results.
  std::vector<RetrievalResult> retrieve(const Vec& query, int k) const;

  // Same, scoring under a projection head (HER retrieval), optionally
  // excluding one example id (used when a query is drawn from the corpus
  // itself, to keep it out of its own demonstration set).
  std::vector<RetrievalResult> retrieve(const Vec& query, int k, const ProjectionHead* head,
                                        const std::string& exclude_id = "") const;

  const Vec& vector_of(const std::string& id) const;
  int dim() const { return dim_; }
  size_t size() const { return ids_.size(); }

 private:
  std::vector<std::string> ids_;  // corpus load order
  std::vector<Vec> vectors_;
  std::unordered_map<std::string, size_t> by_id_;
  int dim_ = 0;
};

// Persisted per-corpus embedding cache. Binary records of
// (example_id, base_model_id, dim, little-endian f64 values); the manifest is
// a plain-text file of corpus content hash, embedder id and dim.
struct EmbeddingCacheFile {
  std::unordered_map<std::string, Vec> by_id;

  static std::optional<EmbeddingCacheFile> load_if_valid(const std::string& cache_path,
                                                         uint64_t corpus_hash,
                                                         const std::string& model_id, int dim);
  static void save(const std::string& cache_path, const std::vector<std::string>& ids,
                   const std::vector<Vec>& vectors, uint64_t corpus_hash,
                   const std::string& model_id, int dim);
};

}  // namespace hicl
