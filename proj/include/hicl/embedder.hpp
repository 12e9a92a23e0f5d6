#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>

#include "hicl/embedding.hpp"
#include "hicl/net.hpp"

namespace hicl {

// Produces fixed-dimension base embeddings for question/query text.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vec embed(const std::string& text) = 0;
  virtual const std::string& model_id() const = 0;
  virtual int dim() const = 0;
};

// Deterministic test/desk-scale embedder: hashes word unigrams and character
// trigrams of the normalized text into signed buckets, so surface overlap
// translates into cosine similarity. Pure function of (seed, dim, text).
class MockEmbedder : public Embedder {
 public:
  MockEmbedder(int dim, uint64_t seed, std::string model_id = "");

  Vec embed(const std::string& text) override;
  const std::string& model_id() const override { return model_id_; }
  int dim() const override { return dim_; }

 private:
  int dim_;
  uint64_t seed_;
  std::string model_id_;
};

// Remote embedding endpoint speaking the common commercial schema:
// POST {model, input:[text]} -> {data:[{embedding:[...]}]}.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string endpoint_url, std::string model_id, int dim, std::string bearer_token,
               RetryPolicy policy = {}, HttpTransport transport = default_http_transport(),
               Sleeper sleeper = default_sleeper());

  Vec embed(const std::string& text) override;
  const std::string& model_id() const override { return model_id_; }
  int dim() const override { return dim_; }

 private:
  std::string endpoint_url_;
  std::string model_id_;
  int dim_;
  std::string bearer_token_;
  RetryPolicy policy_;
  HttpTransport transport_;
  Sleeper sleeper_;
};

// The embed() entry point used by the pipeline: validates input, memoizes by
// (base_model_id, text hash), and counts how many calls reach the backend.
class CachingEmbedder : public Embedder {
 public:
  explicit CachingEmbedder(std::unique_ptr<Embedder> inner);

  Vec embed(const std::string& text) override;
  const std::string& model_id() const override { return inner_->model_id(); }
  int dim() const override { return inner_->dim(); }

  int64_t backend_calls() const { return backend_calls_; }

  // Pre-seeds the memo table (e.g. from a persisted corpus cache).
  void prime(const std::string& text, const Vec& vec);

 private:
  std::unique_ptr<Embedder> inner_;
  std::unordered_map<uint64_t, Vec> cache_;
  int64_t backend_calls_ = 0;
};

}  // namespace hicl
