#include "hicl/her_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hicl/hints.hpp"

namespace hicl {

namespace {

constexpr std::string_view kCheckpointMagic = "HICLHER1";
constexpr uint32_t kCheckpointVersion = 1;

json example_to_json(const QAExample& ex) {
  return {{"id", ex.id}, {"question", ex.question}, {"answers", ex.answers}};
}

QAExample example_from_json(const json& j, int line_no) {
  QAExample ex;
  ex.id = j.at("id").get<std::string>();
  ex.question = j.at("question").get<std::string>();
  ex.answers = j.at("answers").get<std::vector<std::string>>();
  ex.line_no = line_no;
  return ex;
}

}  // namespace

std::vector<Triplet> build_triplets(const std::vector<QAExample>& queries, const Corpus& corpus,
                                    const Index& index, CachingEmbedder& embedder, ChatClient& llm,
                                    const std::string& llm_model_id, int k, double tau_pos,
                                    double tau_neg, uint64_t seed, TripletBuildReport* report) {
  if (k < 1) throw Error("build_triplets: k must be >= 1");
  if (!(tau_neg >= 0.0 && tau_neg < tau_pos && tau_pos <= 1.0))
    throw Error("build_triplets: need 0 <= tau_neg < tau_pos <= 1");

  TripletBuildReport local;
  TripletBuildReport& rep = report ? *report : local;
  rep = {};

  std::vector<Triplet> out;
  DetRng rng(seed);
  for (const auto& q : queries) {
    ++rep.queries;
    ExampleSet set;
    Hint hint;
    try {
      const Vec qv = embedder.embed(q.question);
      const auto results = index.retrieve(qv, k, nullptr, q.id);
      if (results.empty()) {
        ++rep.skipped["no_examples"];
        continue;
      }
      set = ExampleSet::from_results(q.id, corpus, results);
      hint = extract_hint(llm, llm_model_id, q.id, q.question, set);
    } catch (const Error& e) {
      ++rep.skipped["provider_failure"];
      rep.failures.emplace_back(q.id, e.what());
      continue;
    }
    if (hint.none_flag) {
      ++rep.skipped["none_hint"];
      continue;
    }

    // Highest overlap wins; scanning in rank order with a strict improvement
    // test sends ties to the lower rank.
    int pos_idx = -1;
    double best = -1.0;
    for (size_t i = 0; i < hint.source_attribution.size(); ++i) {
      const double f1 = hint.source_attribution[i].overlap_f1;
      if (f1 >= tau_pos && f1 > best) {
        best = f1;
        pos_idx = static_cast<int>(i);
      }
    }
    if (pos_idx < 0) {
      ++rep.skipped["no_positive"];
      continue;
    }

    std::vector<size_t> neg_pool;
    for (size_t i = 0; i < hint.source_attribution.size(); ++i) {
      if (hint.source_attribution[i].overlap_f1 <= tau_neg) neg_pool.push_back(i);
    }
    if (neg_pool.empty()) {
      ++rep.skipped["no_negative"];
      continue;
    }
    const size_t neg_idx = neg_pool[rng.uniform(neg_pool.size())];

    Triplet t;
    t.query_id = q.id;
    t.query_text = q.question;
    t.positive = set.entries[static_cast<size_t>(pos_idx)].first;
    t.negative = set.entries[neg_idx].first;
    t.f1_pos = hint.source_attribution[static_cast<size_t>(pos_idx)].overlap_f1;
    t.f1_neg = hint.source_attribution[neg_idx].overlap_f1;
    t.hint_text = hint.text;
    out.push_back(std::move(t));
    ++rep.triplets;
  }
  return out;
}

std::string triplets_to_jsonl(const std::vector<Triplet>& triplets) {
  std::string out;
  for (const auto& t : triplets) {
    const json rec = {{"query_id", t.query_id},
                      {"query_text", t.query_text},
                      {"positive", example_to_json(t.positive)},
                      {"negative", example_to_json(t.negative)},
                      {"f1_pos", t.f1_pos},
                      {"f1_neg", t.f1_neg},
                      {"hint_text", t.hint_text}};
    out += rec.dump();
    out += "\n";
  }
  return out;
}

void write_triplets_jsonl(const std::string& path, const std::vector<Triplet>& triplets) {
  write_file(path, triplets_to_jsonl(triplets));
}

std::vector<Triplet> read_triplets_jsonl(const std::string& path) {
  std::vector<Triplet> triplets;
  for_each_line(path, [&](int line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) +
                  ": malformed triplet record: " + e.what());
    }
    Triplet t;
    t.query_id = j.at("query_id").get<std::string>();
    t.query_text = j.at("query_text").get<std::string>();
    t.positive = example_from_json(j.at("positive"), line_no);
    t.negative = example_from_json(j.at("negative"), line_no);
    t.f1_pos = j.at("f1_pos").get<double>();
    t.f1_neg = j.at("f1_neg").get<double>();
    t.hint_text = j.at("hint_text").get<std::string>();
    triplets.push_back(std::move(t));
  });
  return triplets;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error("train config: batch_size must be >= 2");
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (!(tau_neg >= 0.0 && tau_neg < tau_pos && tau_pos <= 1.0))
    throw Error("train config: need 0 <= tau_neg < tau_pos <= 1");
  if (learning_rate < 0.0) throw Error("train config: learning_rate must be >= 0");
  if (!(temperature > 0.0)) throw Error("train config: temperature must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error("train config: validation_fraction must be in (0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw Error("train config: adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error("train config: adam_eps must be > 0");
}

std::string TrainConfig::hash() const {
  const json j = {{"batch_size", batch_size},
                  {"learning_rate", learning_rate},
                  {"epochs", epochs},
                  {"seed", seed},
                  {"adam_beta1", adam_beta1},
                  {"adam_beta2", adam_beta2},
                  {"adam_eps", adam_eps},
                  {"tau_pos", tau_pos},
                  {"tau_neg", tau_neg},
                  {"validation_fraction", validation_fraction},
                  {"temperature", temperature}};
  return to_hex(fnv1a64(j.dump()));
}

std::vector<EmbeddedTriplet> embed_triplets(const std::vector<Triplet>& triplets,
                                            Embedder& embedder) {
  std::vector<EmbeddedTriplet> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    out.push_back({embedder.embed(t.query_text), embedder.embed(t.positive.question),
                   embedder.embed(t.negative.question)});
  }
  return out;
}

namespace {

struct Forward {
  std::vector<Vec> pq, pp, pn;  // projected query / positive / negative
  double loss = 0.0;
  std::vector<double> sigma_pos;  // softmax mass on the positive, per anchor
  Mat sigma_neg;                  // B x B softmax mass on negative j for anchor i
};

Forward forward_pass(const ProjectionHead& head, const std::vector<EmbeddedTriplet>& batch,
                     double temperature) {
  if (batch.empty()) throw Error("info_nce: empty batch");
  if (!(temperature > 0.0)) throw Error("info_nce: temperature must be > 0");
  const size_t B = batch.size();
  const auto Bi = static_cast<Eigen::Index>(B);

  Forward f;
  f.pq.reserve(B);
  f.pp.reserve(B);
  f.pn.reserve(B);
  const auto checked = [](Vec v) {
    if (v.norm() == 0.0) throw Error("info_nce: zero-norm projection (degenerate head)");
    return v;
  };
  for (const auto& t : batch) {
    f.pq.push_back(checked(project(head, t.query)));
    f.pp.push_back(checked(project(head, t.positive)));
    f.pn.push_back(checked(project(head, t.negative)));
  }

  std::vector<double> s_pos(B);
  Mat s_neg(Bi, Bi);
  for (size_t i = 0; i < B; ++i) {
    s_pos[i] = similarity(f.pq[i], f.pp[i]) / temperature;
    for (size_t j = 0; j < B; ++j) {
      s_neg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          similarity(f.pq[i], f.pn[j]) / temperature;
    }
  }

  // -log(e^{s+} / (e^{s+} + sum_j e^{s-_j})), stabilized by the row max.
  f.sigma_pos.resize(B);
  f.sigma_neg = Mat(Bi, Bi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < Bi; ++i) {
    double m = s_pos[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < Bi; ++j) m = std::max(m, s_neg(i, j));
    const double e_pos = std::exp(s_pos[static_cast<size_t>(i)] - m);
    double z = e_pos;
    for (Eigen::Index j = 0; j < Bi; ++j) z += std::exp(s_neg(i, j) - m);
    total += m + std::log(z) - s_pos[static_cast<size_t>(i)];
    f.sigma_pos[static_cast<size_t>(i)] = e_pos / z;
    for (Eigen::Index j = 0; j < Bi; ++j) f.sigma_neg(i, j) = std::exp(s_neg(i, j) - m) / z;
  }
  f.loss = total / static_cast<double>(B);
  return f;
}

// Adds weight * d cos(a, b)/dW to grad, where a = W u and b = W v:
// dc/da = b/(|a||b|) - c a/|a|^2, and dc/dW = (dc/da) u^T + (dc/db) v^T.
void add_cosine_gradient(Mat& grad, double weight, const Vec& u, const Vec& v, const Vec& a,
                         const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("info_nce: zero-norm projection (degenerate head)");
  const double c = a.dot(b) / (na * nb);
  const Vec da = b / (na * nb) - a * (c / (na * na));
  const Vec db = a / (na * nb) - b * (c / (nb * nb));
  grad.noalias() += weight * (da * u.transpose() + db * v.transpose());
}

}  // namespace

double info_nce_loss(const ProjectionHead& head, const std::vector<EmbeddedTriplet>& batch,
                     double temperature) {
  return forward_pass(head, batch, temperature).loss;
}

LossAndGradient loss_with_gradient(const ProjectionHead& head,
                                   const std::vector<EmbeddedTriplet>& batch, double temperature) {
  const Forward f = forward_pass(head, batch, temperature);
  const size_t B = batch.size();
  const double scale = 1.0 / (static_cast<double>(B) * temperature);

  Mat grad = Mat::Zero(head.weights.rows(), head.weights.cols());
  for (size_t i = 0; i < B; ++i) {
    add_cosine_gradient(grad, (f.sigma_pos[i] - 1.0) * scale, batch[i].query, batch[i].positive,
                        f.pq[i], f.pp[i]);
    for (size_t j = 0; j < B; ++j) {
      add_cosine_gradient(
          grad, f.sigma_neg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * scale,
          batch[i].query, batch[j].negative, f.pq[i], f.pn[j]);
    }
  }
  return {f.loss, std::move(grad)};
}

Mat loss_gradient(const ProjectionHead& head, const std::vector<EmbeddedTriplet>& batch,
                  double temperature) {
  return loss_with_gradient(head, batch, temperature).grad;
}

AdamOptimizer::AdamOptimizer(int dim, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Mat::Zero(dim, dim)),
      v_(Mat::Zero(dim, dim)) {
  if (dim < 1) throw Error("adam: dim must be >= 1");
}

void AdamOptimizer::step(Mat& weights, const Mat& grad) {
  if (weights.rows() != m_.rows() || weights.cols() != m_.cols() || grad.rows() != m_.rows() ||
      grad.cols() != m_.cols())
    throw Error("adam: shape mismatch");
  if (!all_finite(grad))
    throw Error("adam: non-finite gradient at step " + std::to_string(t_ + 1));
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  weights.array() -= lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

RetrieverEval evaluate_retriever(const ProjectionHead& head,
                                 const std::vector<EmbeddedTriplet>& validation) {
  if (validation.empty()) throw Error("evaluate_retriever: empty validation set");
  const size_t n = validation.size();
  std::vector<Vec> pq(n), pp(n), pn(n);
  for (size_t i = 0; i < n; ++i) {
    pq[i] = project(head, validation[i].query);
    pp[i] = project(head, validation[i].positive);
    pn[i] = project(head, validation[i].negative);
  }
  size_t correct = 0;
  double mrr_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double s_pos = similarity(pq[i], pp[i]);
    size_t above = 0;
    double s_own = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double s = similarity(pq[i], pn[j]);
      if (s > s_pos) ++above;
      if (j == i) s_own = s;
    }
    if (s_pos > s_own) ++correct;
    mrr_sum += 1.0 / static_cast<double>(1 + above);
  }
  return {static_cast<double>(correct) / static_cast<double>(n),
          mrr_sum / static_cast<double>(n)};
}

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  const int d = ckpt.head.dim();
  if (d < 1) throw Error("checkpoint: empty head");
  if (ckpt.head.weights.cols() != d) throw Error("checkpoint: head must be square");
  std::string out;
  out += kCheckpointMagic;
  append_u32_le(out, kCheckpointVersion);
  append_u32_le(out, static_cast<uint32_t>(d));
  append_u32_le(out, static_cast<uint32_t>(ckpt.epoch));
  append_f64_le(out, ckpt.validation_metric);
  append_sized_string(out, ckpt.head.base_model_id);
  append_sized_string(out, ckpt.config_hash);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) append_f64_le(out, ckpt.head.weights(r, c));
  }
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  try {
    if (buf.size() < kCheckpointMagic.size() ||
        std::string_view(buf).substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
      throw Error("not a checkpoint file (bad magic)");
    size_t pos = kCheckpointMagic.size();
    const uint32_t version = read_u32_le(buf, pos);
    if (version != kCheckpointVersion)
      throw Error("unsupported checkpoint format version " + std::to_string(version));
    const auto d = static_cast<int>(read_u32_le(buf, pos));
    const auto epoch = static_cast<int>(read_u32_le(buf, pos));
    Checkpoint ckpt;
    ckpt.epoch = epoch;
    ckpt.validation_metric = read_f64_le(buf, pos);
    ckpt.head.base_model_id = read_sized_string(buf, pos);
    ckpt.config_hash = read_sized_string(buf, pos);
    ckpt.head.version = epoch;
    ckpt.head.weights = Mat(d, d);
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) ckpt.head.weights(r, c) = read_f64_le(buf, pos);
    }
    return ckpt;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

json history_to_json(const TrainResult& result, const std::string& base_model_id) {
  json epochs = json::array();
  for (const auto& e : result.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_train_loss", e.mean_train_loss},
                      {"val_pairwise_accuracy", e.val_pairwise_accuracy},
                      {"val_mrr", e.val_mrr}});
  }
  return {{"base_model_id", base_model_id},
          {"config_hash", result.best.config_hash},
          {"baseline",
           {{"pairwise_accuracy", result.baseline.pairwise_accuracy}, {"mrr", result.baseline.mrr}}},
          {"best_epoch", result.best.epoch},
          {"best_validation_metric", result.best.validation_metric},
          {"train_count", result.train_count},
          {"val_count", result.val_count},
          {"epochs", epochs}};
}

TrainResult train(const TrainConfig& config, const std::vector<EmbeddedTriplet>& triplets,
                  const std::string& base_model_id, const std::string& checkpoint_path) {
  config.validate();
  const size_t n = triplets.size();
  if (n == 0) throw Error("train: insufficient data (no triplets)");
  const auto d = static_cast<int>(triplets.front().query.size());
  for (const auto& t : triplets) {
    if (t.query.size() != d || t.positive.size() != d || t.negative.size() != d)
      throw Error("train: inconsistent embedding dimensions");
  }

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  DetRng split_rng(config.seed);
  split_rng.shuffle(order);

  const size_t val_count =
      std::max<size_t>(1, static_cast<size_t>(std::llround(
                              static_cast<double>(n) * config.validation_fraction)));
  if (n <= val_count || n - val_count < static_cast<size_t>(config.batch_size)) {
    throw Error("train: insufficient data (" + std::to_string(n) + " triplets leave fewer than " +
                std::to_string(config.batch_size) + " for training after holding out " +
                std::to_string(val_count) + " for validation)");
  }
  const size_t train_count = n - val_count;

  std::vector<EmbeddedTriplet> train_set, val_set;
  train_set.reserve(train_count);
  val_set.reserve(val_count);
  for (size_t i = 0; i < train_count; ++i) train_set.push_back(triplets[order[i]]);
  for (size_t i = train_count; i < n; ++i) val_set.push_back(triplets[order[i]]);

  TrainResult result;
  result.train_count = static_cast<int>(train_count);
  result.val_count = static_cast<int>(val_count);

  ProjectionHead head = ProjectionHead::identity(d, base_model_id);
  result.baseline = evaluate_retriever(head, val_set);

  AdamOptimizer adam(d, config.learning_rate, config.adam_beta1, config.adam_beta2,
                     config.adam_eps);

  Mat best_weights = head.weights;
  int best_epoch = 0;
  double best_acc = -1.0;
  double best_mrr = -1.0;

  const size_t batch_size = static_cast<size_t>(config.batch_size);
  const size_t batches = train_count / batch_size;
  std::vector<size_t> train_order(train_count);
  std::vector<EmbeddedTriplet> batch(batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(train_order.begin(), train_order.end(), size_t{0});
    DetRng epoch_rng(config.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch)));
    epoch_rng.shuffle(train_order);

    double loss_sum = 0.0;
    for (size_t b = 0; b < batches; ++b) {
      for (size_t i = 0; i < batch_size; ++i) batch[i] = train_set[train_order[b * batch_size + i]];
      auto [loss, grad] = loss_with_gradient(head, batch, config.temperature);
      adam.step(head.weights, grad);
      loss_sum += loss;
    }

    const RetrieverEval ev = evaluate_retriever(head, val_set);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(batches), ev.pairwise_accuracy, ev.mrr});
    if (ev.pairwise_accuracy > best_acc ||
        (ev.pairwise_accuracy == best_acc && ev.mrr > best_mrr)) {
      best_acc = ev.pairwise_accuracy;
      best_mrr = ev.mrr;
      best_epoch = epoch;
      best_weights = head.weights;
    }
  }

  result.best.head = ProjectionHead{std::move(best_weights), base_model_id, best_epoch};
  result.best.epoch = best_epoch;
  result.best.validation_metric = best_acc;
  result.best.config_hash = config.hash();

  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, result.best);
    write_file(checkpoint_path + ".history.json",
               history_to_json(result, base_model_id).dump(2) + "\n");
  }
  return result;
}

TrainResult train(const TrainConfig& config, const std::vector<Triplet>& triplets,
                  Embedder& embedder, const std::string& checkpoint_path) {
  return train(config, embed_triplets(triplets, embedder), embedder.model_id(), checkpoint_path);
}

}  // namespace hicl
