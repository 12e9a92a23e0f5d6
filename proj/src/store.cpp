#include "hicl/store.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "hicl/util.hpp"

namespace hicl {

namespace {

std::string manifest_path(const std::string& cache_path) { return cache_path + ".manifest"; }

std::string render_manifest(uint64_t corpus_hash, const std::string& model_id, int dim) {
  std::ostringstream ss;
  ss << "corpus_hash=" << to_hex(corpus_hash) << "\n"
     << "embedder=" << model_id << "\n"
     << "dim=" << dim << "\n";
  return ss.str();
}

}  // namespace

std::optional<EmbeddingCacheFile> EmbeddingCacheFile::load_if_valid(const std::string& cache_path,
                                                                    uint64_t corpus_hash,
                                                                    const std::string& model_id,
                                                                    int dim) {
  namespace fs = std::filesystem;
  if (cache_path.empty() || !fs::exists(cache_path) || !fs::exists(manifest_path(cache_path))) {
    return std::nullopt;
  }
  if (read_file(manifest_path(cache_path)) != render_manifest(corpus_hash, model_id, dim)) {
    return std::nullopt;
  }
  const std::string buf = read_file(cache_path);
  EmbeddingCacheFile cache;
  size_t pos = 0;
  while (pos < buf.size()) {
    const std::string id = read_sized_string(buf, pos);
    const std::string rec_model = read_sized_string(buf, pos);
    const uint32_t rec_dim = read_u32_le(buf, pos);
    Vec v(rec_dim);
    for (uint32_t i = 0; i < rec_dim; ++i) v[i] = read_f64_le(buf, pos);
    if (rec_model != model_id || static_cast<int>(rec_dim) != dim) return std::nullopt;
    cache.by_id.emplace(id, std::move(v));
  }
  return cache;
}

void EmbeddingCacheFile::save(const std::string& cache_path, const std::vector<std::string>& ids,
                              const std::vector<Vec>& vectors, uint64_t corpus_hash,
                              const std::string& model_id, int dim) {
  std::string buf;
  for (size_t i = 0; i < ids.size(); ++i) {
    append_sized_string(buf, ids[i]);
    append_sized_string(buf, model_id);
    append_u32_le(buf, static_cast<uint32_t>(vectors[i].size()));
    for (Eigen::Index j = 0; j < vectors[i].size(); ++j) append_f64_le(buf, vectors[i][j]);
  }
  write_file(cache_path, buf);
  write_file(manifest_path(cache_path), render_manifest(corpus_hash, model_id, dim));
}

Index Index::build(const Corpus& corpus, CachingEmbedder& embedder, const std::string& cache_path,
                   IndexBuildStats* stats) {
  Index index;
  index.dim_ = embedder.dim();

  auto cached = cache_path.empty()
                    ? std::nullopt
                    : EmbeddingCacheFile::load_if_valid(cache_path, corpus.content_hash,
                                                        embedder.model_id(), embedder.dim());

  const int64_t calls_before = embedder.backend_calls();
  for (const auto& ex : corpus.examples) {
    Vec v;
    if (cached) {
      auto it = cached->by_id.find(ex.id);
      if (it != cached->by_id.end()) {
        v = it->second;
        embedder.prime(ex.question, v);
      }
    }
    if (v.size() == 0) v = embedder.embed(ex.question);
    if (v.size() != index.dim_) {
      throw Error("build_index: dimension mismatch for example \"" + ex.id + "\"");
    }
    if (v.isZero(0.0)) {
      throw Error("build_index: zero-norm embedding for example \"" + ex.id +
                  "\" (cosine similarity undefined)");
    }
    index.by_id_.emplace(ex.id, index.ids_.size());
    index.ids_.push_back(ex.id);
    index.vectors_.push_back(std::move(v));
  }

  if (!cache_path.empty()) {
    EmbeddingCacheFile::save(cache_path, index.ids_, index.vectors_, corpus.content_hash,
                             embedder.model_id(), embedder.dim());
  }
  if (stats) {
    stats->examples = index.ids_.size();
    stats->dim = index.dim_;
    stats->new_embeddings = static_cast<size_t>(embedder.backend_calls() - calls_before);
  }
  return index;
}

std::vector<RetrievalResult> Index::retrieve(const Vec& query, int k) const {
  return retrieve(query, k, nullptr, "");
}

std::vector<RetrievalResult> Index::retrieve(const Vec& query, int k, const ProjectionHead* head,
                                             const std::string& exclude_id) const {
  if (k < 1) throw Error("retrieve: k must be >= 1");
  if (query.size() != dim_) {
    throw Error("retrieve: dimension mismatch (query " + std::to_string(query.size()) +
                " vs index " + std::to_string(dim_) + ")");
  }

  const Vec projected_query = head ? project(*head, query) : query;

  std::vector<RetrievalResult> scored;
  scored.reserve(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (!exclude_id.empty() && ids_[i] == exclude_id) continue;
    const double s = head ? similarity(projected_query, project(*head, vectors_[i]))
                          : similarity(projected_query, vectors_[i]);
    scored.push_back({ids_[i], s, 0});
  }
  std::sort(scored.begin(), scored.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.example_id < b.example_id;
  });
  const size_t take = std::min<size_t>(static_cast<size_t>(k), scored.size());
  scored.resize(take);
  for (size_t i = 0; i < take; ++i) scored[i].rank = static_cast<int>(i) + 1;
  return scored;
}

const Vec& Index::vector_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("index: unknown example id \"" + id + "\"");
  return vectors_[it->second];
}

}  // namespace hicl
