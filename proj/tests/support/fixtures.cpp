#include "support/fixtures.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>

#include <Eigen/Dense>

namespace fs = std::filesystem;

namespace fixtures {

namespace {
std::atomic<int> g_dir_counter{0};
}

TempDir::TempDir(const std::string& label) {
  const int n = g_dir_counter.fetch_add(1);
  fs::path base = fs::temp_directory_path() / "hicl-tests";
  fs::path dir =
      base / (label + "-" + std::to_string(::getpid()) + "-" + std::to_string(n));
  fs::create_directories(dir);
  path_ = dir.string();
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);  // best effort; leftovers live under the temp root
}

FixtureEmbedder::FixtureEmbedder(int dim, std::string model_id)
    : dim_(dim), model_id_(std::move(model_id)) {}

void FixtureEmbedder::set(const std::string& text, hicl::Vec v) {
  for (auto& [t, vec] : by_text_) {
    if (t == text) {
      vec = std::move(v);
      return;
    }
  }
  by_text_.emplace_back(text, std::move(v));
}

hicl::Vec FixtureEmbedder::embed(const std::string& text) {
  for (const auto& [t, vec] : by_text_) {
    if (t == text) return vec;
  }
  throw hicl::Error("FixtureEmbedder: no vector registered for \"" + text + "\"");
}

hicl::Corpus make_corpus(std::vector<hicl::QAExample> examples) {
  hicl::Corpus corpus;
  corpus.examples = std::move(examples);
  corpus.source_path = "<memory>";
  std::string key;
  for (size_t i = 0; i < corpus.examples.size(); ++i) {
    if (corpus.examples[i].line_no == 0) corpus.examples[i].line_no = static_cast<int>(i) + 1;
    corpus.by_id_.emplace(corpus.examples[i].id, i);
    key += corpus.examples[i].id;
    key += '\n';
    key += corpus.examples[i].question;
    key += '\n';
  }
  corpus.content_hash = hicl::fnv1a64(key);
  return corpus;
}

hicl::QAExample qa(std::string id, std::string question, std::vector<std::string> answers) {
  hicl::QAExample ex;
  ex.id = std::move(id);
  ex.question = std::move(question);
  ex.answers = std::move(answers);
  return ex;
}

hicl::Vec random_vec(hicl::DetRng& rng, int dim) {
  hicl::Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
  return v;
}

hicl::Mat random_rotation(int dim, hicl::DetRng& rng) {
  hicl::Mat g(dim, dim);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) g(r, c) = rng.gaussian();
  }
  Eigen::HouseholderQR<hicl::Mat> qr(g);
  return qr.householderQ() * hicl::Mat::Identity(dim, dim);
}

std::vector<hicl::EmbeddedTriplet> make_synthetic_triplets(const SyntheticSpec& spec) {
  hicl::DetRng rng(spec.seed);
  const hicl::Mat rot = random_rotation(spec.dim, rng);

  auto assemble = [&](const hicl::Vec& signal) {
    hicl::Vec full(spec.dim);
    for (int d = 0; d < spec.signal_dims; ++d) full[d] = signal[d];
    for (int d = spec.signal_dims; d < spec.dim; ++d) full[d] = spec.noise_scale * rng.gaussian();
    return hicl::Vec(rot * full);
  };

  std::vector<hicl::EmbeddedTriplet> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    hicl::Vec sig(spec.signal_dims), pos_sig(spec.signal_dims), neg_sig(spec.signal_dims);
    for (int d = 0; d < spec.signal_dims; ++d) sig[d] = rng.gaussian();
    for (int d = 0; d < spec.signal_dims; ++d) pos_sig[d] = sig[d] + spec.jitter * rng.gaussian();
    for (int d = 0; d < spec.signal_dims; ++d) neg_sig[d] = -sig[d] + spec.jitter * rng.gaussian();
    hicl::EmbeddedTriplet t;
    t.query = assemble(sig);
    t.positive = assemble(pos_sig);
    t.negative = assemble(neg_sig);
    out.push_back(std::move(t));
  }
  return out;
}

PlantedFixture make_planted_fixture(int n_queries, int n_demos) {
  PlantedFixture fx;
  std::vector<hicl::QAExample> demos;
  for (int j = 0; j < n_demos; ++j) {
    const std::string tag = std::to_string(j);
    demos.push_back(
        qa("bg" + tag, "Background note " + tag + " about mexa" + tag + ".", {"note" + tag}));
  }
  fx.corpus = make_corpus(std::move(demos));
  for (int i = 0; i < n_queries; ++i) {
    const std::string tag = std::to_string(i);
    const std::string question = "What is the secret code of mexa" + tag + "?";
    const std::string hint = "The code of mexa" + tag + " is codeword" + tag;
    fx.test_queries.push_back(qa("pq" + tag, question, {"codeword" + tag}));
    fx.hint_rules.emplace_back("related to " + question, hint);
    fx.answer_rules.emplace_back("Hint: " + hint, "codeword" + tag);
  }
  return fx;
}

std::string alien(const std::string& prefix, int topic) {
  return prefix + std::string(3, static_cast<char>('a' + topic));
}

void write_jsonl(const std::string& path, const std::vector<hicl::json>& lines) {
  std::string out;
  for (const auto& j : lines) {
    out += j.dump();
    out += '\n';
  }
  hicl::write_file(path, out);
}

PipelineFixture build_pipeline_fixture(const std::string& root_dir) {
  PipelineFixture fx;
  fx.root = root_dir;
  fx.config_path = root_dir + "/config.json";
  fx.train_corpus_path = root_dir + "/train.jsonl";
  fx.test_corpus_path = root_dir + "/test.jsonl";
  fx.script_path = root_dir + "/script.jsonl";

  const int topics = 12;
  std::vector<hicl::json> train;
  std::vector<hicl::json> script;

  for (int t = 0; t < topics; ++t) {
    const std::string k = alien("zor", t), r = alien("mel", t);
    const std::string v = alien("tav", t), n = alien("rik", t);
    // Alien tokens appear twice per question so same-topic surface overlap
    // beats the shared English scaffold under the mock embedder.
    const std::string qa_q = "What links " + k + " with " + r + "? " + k + " " + r;
    const std::string qb_q = "Which year " + k + " met " + r + "? " + k + " " + r;
    train.push_back({{"id", "t" + std::to_string(t) + "a"},
                     {"question", qa_q},
                     {"answers", {v}}});
    train.push_back({{"id", "t" + std::to_string(t) + "b"},
                     {"question", qb_q},
                     {"answers", {n}}});
    // Hints are alien-only: overlap with the sibling clears tau_pos while
    // every cross-topic example stays at exactly zero (a clean negative pool).
    script.push_back({{"match", "related to " + qa_q}, {"response", k + " " + r + " " + n}});
    script.push_back({{"match", "related to " + qb_q}, {"response", k + " " + r + " " + v}});
  }
  // One query whose hint is the filtered None, one whose hint overlaps nothing.
  train.push_back({{"id", "odd-none"},
                   {"question", "Completely unrelated zubzub query?"},
                   {"answers", {"zig"}}});
  train.push_back({{"id", "odd-weak"},
                   {"question", "Another stray wumpus question?"},
                   {"answers", {"zag"}}});
  script.push_back(
      {{"match", "related to Another stray wumpus question?"}, {"response", "wumpus"}});

  std::vector<hicl::json> test;
  for (int i = 0; i < 8; ++i) {
    const std::string k = alien("zor", i), v = alien("tav", i);
    const std::string q = "What is " + v + " and how does it relate to " + k + "?";
    test.push_back({{"id", "q" + std::to_string(i)}, {"question", q}, {"answers", {v}}});
    script.push_back({{"match", "related to " + q}, {"response", k + " " + v}});
    script.push_back({{"match", "Hint: " + k + " " + v}, {"response", v}});
    script.push_back({{"match", "memory that is related to the following question.\n\nQ: " + q},
                      {"response", "Recalled that " + v + " goes with " + k + "."}});
    if (i % 2 == 0) {
      // Only even queries are answerable without the hint.
      script.push_back({{"match", "Q: " + q + "\nA:"}, {"response", v}});
    }
  }

  write_jsonl(fx.train_corpus_path, train);
  write_jsonl(fx.test_corpus_path, test);
  write_jsonl(fx.script_path, script);

  fx.config = {
      {"out_dir", root_dir + "/out"},
      {"seed", 7},
      {"corpus", {{"train", fx.train_corpus_path}, {"test", fx.test_corpus_path}}},
      {"embedder", {{"provider", "mock"}, {"dim", 48}}},
      {"llm",
       {{"provider", "mock"},
        {"model_id", "mock-script"},
        {"script", fx.script_path},
        {"default_response", "None"}}},
      {"hints", {{"k", 5}, {"tau_attr", 0.3}, {"max_tokens", 64}, {"retriever", "base"}}},
      {"her",
       {{"k", 10},
        {"batch_size", 4},
        {"learning_rate", 0.02},
        {"epochs", 3},
        {"tau_pos", 0.5},
        {"tau_neg", 0.1},
        {"validation_fraction", 0.15},
        {"temperature", 1.0}}},
      {"experiment",
       {{"method", "standard_icl"},
        {"shots", 3},
        {"ordering", "default"},
        {"seeds", {1, 2}},
        {"n_queries", 8},
        {"retriever", "base"},
        {"tau_attr", 0.3},
        {"max_tokens", 32}}},
  };
  rewrite_config(fx);
  return fx;
}

void rewrite_config(const PipelineFixture& fx) {
  hicl::write_file(fx.config_path, fx.config.dump(2) + "\n");
}

}  // namespace fixtures
