#include "hicl/embedder.hpp"

#include <cctype>
#include <utility>

#include <nlohmann/json.hpp>

#include "hicl/util.hpp"

namespace hicl {

namespace {

// Lowercase, map non-alphanumerics to spaces, collapse runs.
std::string normalize_surface(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool prev_space = true;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
      prev_space = false;
    } else if (!prev_space) {
      out.push_back(' ');
      prev_space = true;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

MockEmbedder::MockEmbedder(int dim, uint64_t seed, std::string model_id)
    : dim_(dim), seed_(seed), model_id_(std::move(model_id)) {
  if (dim_ <= 0) throw Error("MockEmbedder: dim must be positive");
  if (model_id_.empty()) {
    model_id_ = "mock-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
  }
}

Vec MockEmbedder::embed(const std::string& text) {
  const std::string norm = normalize_surface(text);
  Vec v = Vec::Zero(dim_);

  auto add_feature = [&](std::string_view gram) {
    uint64_t h = fnv1a64(gram, kFnvOffset ^ seed_);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<uint64_t>(dim_));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[bucket] += sign;
  };

  // Word unigrams.
  size_t i = 0;
  while (i < norm.size()) {
    size_t j = norm.find(' ', i);
    if (j == std::string::npos) j = norm.size();
    if (j > i) add_feature(std::string_view(norm).substr(i, j - i));
    i = j + 1;
  }
  // Character trigrams across the normalized string.
  if (norm.size() >= 3) {
    for (size_t k = 0; k + 3 <= norm.size(); ++k) {
      add_feature(std::string_view(norm).substr(k, 3));
    }
  }

  if (v.isZero(0.0)) {
    // Hash signs cancelled (or the text normalized to nothing): fall back to a
    // single deterministic unit feature so the vector stays usable for cosine.
    v[static_cast<Eigen::Index>(fnv1a64(text, kFnvOffset ^ seed_) % static_cast<uint64_t>(dim_))] = 1.0;
  }
  return v;
}

HttpEmbedder::HttpEmbedder(std::string endpoint_url, std::string model_id, int dim,
                           std::string bearer_token, RetryPolicy policy, HttpTransport transport,
                           Sleeper sleeper)
    : endpoint_url_(std::move(endpoint_url)),
      model_id_(std::move(model_id)),
      dim_(dim),
      bearer_token_(std::move(bearer_token)),
      policy_(policy),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)) {
  if (dim_ <= 0) throw Error("HttpEmbedder: dim must be positive");
}

Vec HttpEmbedder::embed(const std::string& text) {
  json body = {{"model", model_id_}, {"input", json::array({text})}};
  const std::string payload = body.dump();

  DetRng jitter(policy_.jitter_seed ^ fnv1a64(text));
  std::string last_failure;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    const HttpResult res = transport_(endpoint_url_, payload, bearer_token_, policy_.timeout_ms);
    const bool transient = res.failure != HttpResult::Failure::none || retryable_status(res.status);
    if (res.failure == HttpResult::Failure::none && res.status == 200) {
      json parsed;
      try {
        parsed = json::parse(res.body);
        const auto& emb = parsed.at("data").at(0).at("embedding");
        Vec v(emb.size());
        for (size_t i = 0; i < emb.size(); ++i) v[static_cast<Eigen::Index>(i)] = emb.at(i).get<double>();
        if (v.size() != dim_) {
          throw Error("embedding dimension mismatch: endpoint returned " +
                      std::to_string(v.size()) + ", configured " + std::to_string(dim_));
        }
        if (!all_finite(v)) throw Error("embedding endpoint returned non-finite values");
        return v;
      } catch (const json::exception& e) {
        throw Error(std::string("malformed embedding response: ") + e.what());
      }
    }
    if (!transient) {
      throw Error("embedding endpoint error: HTTP " + std::to_string(res.status) + " " + res.body);
    }
    last_failure = res.failure == HttpResult::Failure::timeout ? "timeout"
                   : res.failure == HttpResult::Failure::transport
                       ? "transport: " + res.detail
                       : "HTTP " + std::to_string(res.status);
    if (attempt < policy_.max_attempts) {
      sleeper_(backoff_delay_ms(policy_, attempt, jitter.next_u64()));
    }
  }
  throw Error("embedding endpoint failed after " + std::to_string(policy_.max_attempts) +
              " attempts (last: " + last_failure + ")");
}

CachingEmbedder::CachingEmbedder(std::unique_ptr<Embedder> inner) : inner_(std::move(inner)) {}

Vec CachingEmbedder::embed(const std::string& text) {
  if (trim(text).empty()) throw Error("embed: text must be non-empty");
  const uint64_t key = fnv1a64(text, fnv1a64(inner_->model_id()));
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  Vec v = inner_->embed(text);
  ++backend_calls_;
  if (v.size() != inner_->dim()) {
    throw Error("embed: dimension mismatch (got " + std::to_string(v.size()) + ", expected " +
                std::to_string(inner_->dim()) + ")");
  }
  if (!all_finite(v)) throw Error("embed: non-finite embedding values");
  cache_.emplace(key, v);
  return v;
}

void CachingEmbedder::prime(const std::string& text, const Vec& vec) {
  const uint64_t key = fnv1a64(text, fnv1a64(inner_->model_id()));
  cache_.emplace(key, vec);
}

}  // namespace hicl
