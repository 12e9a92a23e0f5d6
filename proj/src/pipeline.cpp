#include "hicl/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace hicl {

namespace {

std::string env_token(const char* specific) {
  if (const char* v = std::getenv(specific); v && *v) return v;
  if (const char* v = std::getenv("HICL_API_KEY"); v && *v) return v;
  return "";
}

std::string resolved_embedder_id(const PipelineConfig& config) {
  if (config.embedder.provider == "mock") {
    return "mock-d" + std::to_string(config.embedder.dim) + "-s" + std::to_string(config.seed);
  }
  return config.embedder.model_id;
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": malformed config: " + e.what());
  }
  try {
    return from_json(j);
  } catch (const json::exception& e) {
    throw Error(path + ": bad config value: " + e.what());
  }
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.out_dir = j.value("out_dir", c.out_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("corpus")) {
    const json& co = j.at("corpus");
    c.train_corpus = co.value("train", "");
    c.test_corpus = co.value("test", "");
  }
  if (j.contains("embedder")) {
    const json& e = j.at("embedder");
    c.embedder.provider = e.value("provider", c.embedder.provider);
    c.embedder.model_id = e.value("model_id", c.embedder.model_id);
    c.embedder.dim = e.value("dim", c.embedder.dim);
    c.embedder.endpoint = e.value("endpoint", c.embedder.endpoint);
  }
  if (j.contains("llm")) {
    const json& l = j.at("llm");
    c.llm.provider = l.value("provider", c.llm.provider);
    c.llm.model_id = l.value("model_id", c.llm.model_id);
    c.llm.script = l.value("script", c.llm.script);
    c.llm.default_response = l.value("default_response", c.llm.default_response);
    c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
    c.llm.temperature = l.value("temperature", c.llm.temperature);
    c.llm.concurrency = l.value("concurrency", c.llm.concurrency);
    c.llm.replay_log = l.value("replay_log", c.llm.replay_log);
  }
  if (j.contains("hints")) {
    const json& h = j.at("hints");
    c.hints.k = h.value("k", c.hints.k);
    c.hints.tau_attr = h.value("tau_attr", c.hints.tau_attr);
    c.hints.max_tokens = h.value("max_tokens", c.hints.max_tokens);
    c.hints.retriever = h.value("retriever", c.hints.retriever);
    c.hints.checkpoint = h.value("checkpoint", c.hints.checkpoint);
  }
  if (j.contains("her")) {
    const json& h = j.at("her");
    c.her.k = h.value("k", c.her.k);
    c.her.train.batch_size = h.value("batch_size", c.her.train.batch_size);
    c.her.train.learning_rate = h.value("learning_rate", c.her.train.learning_rate);
    c.her.train.epochs = h.value("epochs", c.her.train.epochs);
    c.her.train.adam_beta1 = h.value("adam_beta1", c.her.train.adam_beta1);
    c.her.train.adam_beta2 = h.value("adam_beta2", c.her.train.adam_beta2);
    c.her.train.adam_eps = h.value("adam_eps", c.her.train.adam_eps);
    c.her.train.tau_pos = h.value("tau_pos", c.her.train.tau_pos);
    c.her.train.tau_neg = h.value("tau_neg", c.her.train.tau_neg);
    c.her.train.validation_fraction =
        h.value("validation_fraction", c.her.train.validation_fraction);
    c.her.train.temperature = h.value("temperature", c.her.train.temperature);
    if (h.contains("seed")) {
      c.her.train.seed = h.at("seed").get<uint64_t>();
      c.her_seed_explicit = true;
    }
  }
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    if (e.contains("method")) c.experiment.method = method_from_name(e.at("method").get<std::string>());
    c.experiment.shots = e.value("shots", c.experiment.shots);
    if (e.contains("ordering"))
      c.experiment.ordering = order_policy_from_name(e.at("ordering").get<std::string>());
    c.experiment.order_seed = e.value("order_seed", c.experiment.order_seed);
    if (e.contains("seeds")) c.experiment.seeds = e.at("seeds").get<std::vector<uint64_t>>();
    c.experiment.n_queries = e.value("n_queries", c.experiment.n_queries);
    c.experiment.retriever = e.value("retriever", c.experiment.retriever);
    c.experiment.her_checkpoint = e.value("her_checkpoint", c.experiment.her_checkpoint);
    c.experiment.tau_attr = e.value("tau_attr", c.experiment.tau_attr);
    c.experiment.max_tokens = e.value("max_tokens", c.experiment.max_tokens);
  }
  if (!c.her_seed_explicit) c.her.train.seed = c.seed;
  return c;
}

json PipelineConfig::to_json() const {
  return {{"out_dir", out_dir},
          {"seed", seed},
          {"corpus", {{"train", train_corpus}, {"test", test_corpus}}},
          {"embedder",
           {{"provider", embedder.provider},
            {"model_id", embedder.model_id},
            {"dim", embedder.dim},
            {"endpoint", embedder.endpoint}}},
          {"llm",
           {{"provider", llm.provider},
            {"model_id", llm.model_id},
            {"script", llm.script},
            {"default_response", llm.default_response},
            {"endpoint", llm.endpoint},
            {"temperature", llm.temperature},
            {"concurrency", llm.concurrency},
            {"replay_log", llm.replay_log}}},
          {"hints",
           {{"k", hints.k},
            {"tau_attr", hints.tau_attr},
            {"max_tokens", hints.max_tokens},
            {"retriever", hints.retriever},
            {"checkpoint", hints.checkpoint}}},
          {"her",
           {{"k", her.k},
            {"batch_size", her.train.batch_size},
            {"learning_rate", her.train.learning_rate},
            {"epochs", her.train.epochs},
            {"seed", her.train.seed},
            {"adam_beta1", her.train.adam_beta1},
            {"adam_beta2", her.train.adam_beta2},
            {"adam_eps", her.train.adam_eps},
            {"tau_pos", her.train.tau_pos},
            {"tau_neg", her.train.tau_neg},
            {"validation_fraction", her.train.validation_fraction},
            {"temperature", her.train.temperature}}},
          {"experiment", experiment_config_to_json(experiment)}};
}

void PipelineConfig::validate() const {
  if (out_dir.empty()) throw Error("config: out_dir must be set");
  if (train_corpus.empty()) throw Error("config: corpus.train must be set");
  if (test_corpus.empty()) throw Error("config: corpus.test must be set");
  if (embedder.provider != "mock" && embedder.provider != "http")
    throw Error("config: embedder.provider must be \"mock\" or \"http\"");
  if (embedder.provider == "http" && (embedder.endpoint.empty() || embedder.model_id.empty()))
    throw Error("config: an http embedder needs endpoint and model_id");
  if (embedder.dim < 2) throw Error("config: embedder.dim must be >= 2");
  if (llm.provider != "mock" && llm.provider != "http" && llm.provider != "replay")
    throw Error("config: llm.provider must be \"mock\", \"http\" or \"replay\"");
  if (llm.provider == "http" && llm.endpoint.empty())
    throw Error("config: an http llm needs an endpoint");
  if (llm.concurrency < 1) throw Error("config: llm.concurrency must be >= 1");
  if (hints.k < 1) throw Error("config: hints.k must be >= 1");
  if (!(hints.tau_attr >= 0.0 && hints.tau_attr <= 1.0))
    throw Error("config: hints.tau_attr must be in [0, 1]");
  if (hints.retriever != "base" && hints.retriever != "her")
    throw Error("config: hints.retriever must be \"base\" or \"her\"");
  if (her.k < 1) throw Error("config: her.k must be >= 1");
  her.train.validate();
}

std::string PipelineConfig::cache_path() const { return out_dir + "/cache/embeddings.bin"; }
std::string PipelineConfig::checkpoint_path() const { return out_dir + "/her.ckpt"; }

std::string PipelineConfig::replay_log_path() const {
  return llm.replay_log.empty() ? out_dir + "/replay/llm.jsonl" : llm.replay_log;
}

PipelineConfig apply_overrides(PipelineConfig config, const RuntimeOverrides& overrides) {
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  if (overrides.seed) {
    config.seed = *overrides.seed;
    if (!config.her_seed_explicit) config.her.train.seed = *overrides.seed;
  }
  if (overrides.force_mock) {
    config.embedder.provider = "mock";
    config.llm.provider = "mock";
  }
  if (overrides.replay) {
    config.llm.provider = "replay";
    config.llm.replay_log = *overrides.replay;
  }
  return config;
}

std::unique_ptr<CachingEmbedder> make_embedder(const PipelineConfig& config) {
  const auto& s = config.embedder;
  if (s.provider == "mock") {
    return std::make_unique<CachingEmbedder>(std::make_unique<MockEmbedder>(s.dim, config.seed));
  }
  const std::string token = env_token("HICL_EMBED_API_KEY");
  if (token.empty())
    throw Error("embedder: the http provider needs HICL_EMBED_API_KEY or HICL_API_KEY set");
  RetryPolicy policy;
  policy.jitter_seed = config.seed;
  return std::make_unique<CachingEmbedder>(
      std::make_unique<HttpEmbedder>(s.endpoint, s.model_id, s.dim, token, policy));
}

std::unique_ptr<ChatClient> make_chat_client(const PipelineConfig& config) {
  const auto& s = config.llm;
  if (s.provider == "replay") return std::make_unique<ReplayChatClient>(config.replay_log_path());

  std::unique_ptr<ChatClient> inner;
  bool deterministic_time = false;
  if (s.provider == "mock") {
    if (!s.script.empty()) {
      inner = std::make_unique<MockChatClient>(
          MockChatClient::from_script_file(s.script, s.default_response));
    } else {
      inner = std::make_unique<MockChatClient>(s.default_response);
    }
    deterministic_time = true;
  } else {
    const std::string token = env_token("HICL_LLM_API_KEY");
    if (token.empty())
      throw Error("llm: the http provider needs HICL_LLM_API_KEY or HICL_API_KEY set");
    RetryPolicy policy;
    policy.jitter_seed = config.seed;
    inner = std::make_unique<HttpChatClient>(s.endpoint, token, policy);
  }
  auto log = std::make_shared<ReplayLogWriter>(config.replay_log_path(), deterministic_time);
  return std::make_unique<LoggingChatClient>(std::move(inner), std::move(log));
}

void write_artifact(const std::string& path, const std::string& content) {
  if (fs::exists(path)) {
    if (read_file(path) == content) return;
    throw Error(path +
                ": artifact already exists with different content; refusing to overwrite "
                "(use a fresh --out or remove the stale file)");
  }
  write_file(path, content);
}

json config_snapshot(const PipelineConfig& config) {
  return {{"seed", config.seed},
          {"corpus",
           {{"train", config.train_corpus},
            {"train_hash", to_hex(file_content_hash(config.train_corpus))},
            {"test", config.test_corpus},
            {"test_hash", to_hex(file_content_hash(config.test_corpus))}}},
          {"embedder", {{"model_id", resolved_embedder_id(config)}, {"dim", config.embedder.dim}}},
          {"llm", {{"model_id", config.llm.model_id}}},
          {"hints", {{"k", config.hints.k}, {"max_tokens", config.hints.max_tokens}}},
          {"her", {{"k", config.her.k}, {"config_hash", config.her.train.hash()}}}};
}

namespace {

// Commands sharing an output directory must agree on the run identity; a
// mismatching snapshot means the directory holds someone else's artifacts.
void ensure_snapshot(const PipelineConfig& config) {
  const std::string rendered = config_snapshot(config).dump(2) + "\n";
  const std::string path = config.out_dir + "/config.snapshot.json";
  if (fs::exists(path)) {
    if (read_file(path) != rendered)
      throw Error(path +
                  ": output directory was written under a different configuration; refusing to "
                  "mix artifacts (use a fresh --out or delete the directory)");
    return;
  }
  write_file(path, rendered);
}

std::string fmt(double v, int width, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%*.*f", width, precision, v);
  return buf;
}

ProjectionHead load_head_checked(const std::string& path, int index_dim) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.head.dim() != index_dim) {
    throw Error(path + ": checkpoint dimension " + std::to_string(ckpt.head.dim()) +
                " does not match the index dimension " + std::to_string(index_dim));
  }
  return std::move(ckpt.head);
}

}  // namespace

json cmd_build_index(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const Corpus corpus = load_corpus(config.train_corpus);
  auto embedder = make_embedder(config);
  IndexBuildStats stats;
  Index::build(corpus, *embedder, config.cache_path(), &stats);

  const json meta = {{"examples", stats.examples},
                     {"dim", stats.dim},
                     {"embedder", embedder->model_id()},
                     {"corpus_hash", to_hex(corpus.content_hash)}};
  write_artifact(config.out_dir + "/index.json", meta.dump(2) + "\n");

  return {{"command", "build-index"},
          {"examples", stats.examples},
          {"dim", stats.dim},
          {"new_embeddings", stats.new_embeddings},
          {"cache", config.cache_path()}};
}

json cmd_extract_hints(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const Corpus corpus = load_corpus(config.train_corpus);
  auto embedder = make_embedder(config);
  const Index index = Index::build(corpus, *embedder, config.cache_path());
  auto llm = make_chat_client(config);

  std::optional<ProjectionHead> head;
  if (config.hints.retriever == "her") {
    const std::string ckpt =
        config.hints.checkpoint.empty() ? config.checkpoint_path() : config.hints.checkpoint;
    head = load_head_checked(ckpt, index.dim());
  }

  std::vector<Hint> hints;
  int none_count = 0;
  double top_f1_sum = 0.0;
  json failure_list = json::array();
  for (const auto& q : corpus.examples) {
    try {
      const Vec qv = embedder->embed(q.question);
      const auto results = index.retrieve(qv, config.hints.k, head ? &*head : nullptr, q.id);
      if (results.empty()) throw Error("no examples retrieved");
      const ExampleSet set = ExampleSet::from_results(q.id, corpus, results);
      Hint h = extract_hint(*llm, config.llm.model_id, q.id, q.question, set,
                            config.hints.max_tokens);
      if (h.none_flag) {
        ++none_count;
      } else {
        double top = 0.0;
        for (const auto& a : h.source_attribution) top = std::max(top, a.overlap_f1);
        top_f1_sum += top;
      }
      hints.push_back(std::move(h));
    } catch (const Error& e) {
      failure_list.push_back({{"query_id", q.id}, {"error", e.what()}});
    }
  }

  const std::string name = config.hints.retriever == "her" ? "hints_her" : "hints";
  const std::string hints_path = config.out_dir + "/" + name + ".jsonl";
  write_artifact(hints_path, hints_to_jsonl(hints));

  const auto extracted = static_cast<int>(hints.size());
  const int informative = extracted - none_count;
  const json summary = {
      {"command", "extract-hints"},
      {"queries", corpus.size()},
      {"hints", extracted},
      {"none_rate", extracted > 0 ? static_cast<double>(none_count) / extracted : 0.0},
      {"mean_top_attribution_f1", informative > 0 ? top_f1_sum / informative : 0.0},
      {"failures", failure_list.size()},
      {"retriever", config.hints.retriever},
      {"file", hints_path}};

  json artifact = summary;
  artifact.erase("command");
  artifact.erase("file");  // keep the persisted artifact free of output paths
  artifact["failure_list"] = failure_list;
  write_artifact(config.out_dir + "/" + name + ".summary.json", artifact.dump(2) + "\n");
  return summary;
}

json cmd_build_triplets(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const Corpus corpus = load_corpus(config.train_corpus);
  auto embedder = make_embedder(config);
  const Index index = Index::build(corpus, *embedder, config.cache_path());
  auto llm = make_chat_client(config);

  TripletBuildReport report;
  const auto triplets =
      build_triplets(corpus.examples, corpus, index, *embedder, *llm, config.llm.model_id,
                     config.her.k, config.her.train.tau_pos, config.her.train.tau_neg, config.seed,
                     &report);

  const std::string triplets_path = config.out_dir + "/triplets.jsonl";
  write_artifact(triplets_path, triplets_to_jsonl(triplets));

  json failures = json::array();
  for (const auto& [query_id, detail] : report.failures)
    failures.push_back({{"query_id", query_id}, {"error", detail}});
  const json report_json = {{"queries", report.queries},
                            {"triplets", report.triplets},
                            {"skipped", report.skipped},
                            {"failures", failures}};
  write_artifact(config.out_dir + "/triplets.report.json", report_json.dump(2) + "\n");

  return {{"command", "build-triplets"},
          {"queries", report.queries},
          {"triplets", report.triplets},
          {"skipped", report.skipped},
          {"file", triplets_path}};
}

json cmd_train_her(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const std::string triplets_path = config.out_dir + "/triplets.jsonl";
  if (!fs::exists(triplets_path))
    throw Error(triplets_path + ": no triplets found (run build-triplets first)");
  const auto triplets = read_triplets_jsonl(triplets_path);
  auto embedder = make_embedder(config);

  const TrainResult result = train(config.her.train, triplets, *embedder);
  write_artifact(config.checkpoint_path(), checkpoint_to_bytes(result.best));
  write_artifact(config.checkpoint_path() + ".history.json",
                 history_to_json(result, embedder->model_id()).dump(2) + "\n");

  return {{"command", "train-her"},
          {"triplets", triplets.size()},
          {"train_count", result.train_count},
          {"val_count", result.val_count},
          {"baseline",
           {{"pairwise_accuracy", result.baseline.pairwise_accuracy},
            {"mrr", result.baseline.mrr}}},
          {"best_epoch", result.best.epoch},
          {"best_validation_metric", result.best.validation_metric},
          {"checkpoint", config.checkpoint_path()}};
}

namespace {

std::string experiment_label(const ExperimentConfig& ec) {
  std::string label = method_name(ec.method) + "_" + ec.retriever + "_shots" +
                      std::to_string(ec.effective_shots()) + "_" + order_policy_name(ec.ordering);
  if (ec.ordering == OrderPolicy::random) label += "_os" + std::to_string(ec.order_seed);
  return label;
}

}  // namespace

json cmd_eval(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const Corpus corpus = load_corpus(config.train_corpus);
  const Corpus test = load_corpus(config.test_corpus);
  auto embedder = make_embedder(config);
  const Index index = Index::build(corpus, *embedder, config.cache_path());
  auto llm = make_chat_client(config);

  ExperimentConfig ec = config.experiment;
  ec.llm_model_id = config.llm.model_id;
  std::optional<ProjectionHead> head;
  if (ec.retriever == "her") {
    if (ec.her_checkpoint.empty()) ec.her_checkpoint = config.checkpoint_path();
    head = load_head_checked(ec.her_checkpoint, index.dim());
  }

  const ExperimentReport report =
      run_experiment(ec, test.examples, corpus, index, *embedder, *llm, head ? &*head : nullptr);

  std::vector<Transcript> all;
  int incomplete = 0;
  for (const auto& run : report.seed_runs) {
    if (!run.complete) ++incomplete;
    all.insert(all.end(), run.transcripts.begin(), run.transcripts.end());
  }
  const CoverageStats cov = coverage_report(all);

  json rj = report_to_json(report);
  rj["coverage"] = {{"total", cov.total},
                    {"covered", cov.covered},
                    {"coverage", cov.coverage},
                    {"subset_em", cov.subset_em}};
  if (ec.method == Method::hicl) {
    std::map<std::string, int> hist;
    for (const auto& t : all) {
      if (!t.error.empty() || t.hint_none || !t.hint_text) continue;
      if (t.hint_rank) {
        ++hist[std::to_string(*t.hint_rank)];
      } else {
        ++hist["none"];
      }
    }
    rj["rank_histogram"] = hist;
  }

  const std::string label = experiment_label(ec);
  const std::string report_path = config.out_dir + "/eval/" + label + ".report.json";
  const std::string transcripts_path = config.out_dir + "/eval/" + label + ".transcripts.jsonl";
  write_artifact(report_path, rj.dump(2) + "\n");
  write_artifact(transcripts_path, transcripts_to_jsonl(report));

  return {{"command", "eval"},
          {"label", label},
          {"mean_em", report.mean.em},
          {"mean_f1", report.mean.f1},
          {"n", report.mean.n},
          {"incomplete_seeds", incomplete},
          {"coverage", rj["coverage"]},
          {"report", report_path},
          {"transcripts", transcripts_path}};
}

namespace {

struct EvalEntry {
  std::string label;
  std::string method;
  std::string retriever;
  int shots = 0;
  std::string ordering;  // default/reverse/random(seed)
  double em = 0.0;
  double f1 = 0.0;
  int n = 0;
  int incomplete = 0;
  json report;
};

std::vector<EvalEntry> load_eval_entries(const std::string& eval_dir) {
  std::vector<std::string> files;
  if (fs::exists(eval_dir)) {
    for (const auto& entry : fs::directory_iterator(eval_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.size() > 12 && name.substr(name.size() - 12) == ".report.json")
        files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<EvalEntry> entries;
  for (const auto& file : files) {
    EvalEntry e;
    try {
      e.report = json::parse(read_file(file));
    } catch (const json::exception& ex) {
      throw Error(file + ": malformed eval report: " + ex.what());
    }
    const json& cfg = e.report.at("config");
    e.method = cfg.at("method").get<std::string>();
    e.retriever = cfg.at("retriever").get<std::string>();
    e.shots = cfg.at("shots").get<int>();
    e.ordering = cfg.at("ordering").get<std::string>();
    if (e.ordering == "random")
      e.ordering += "(" + std::to_string(cfg.at("order_seed").get<uint64_t>()) + ")";
    e.em = e.report.at("mean").at("em").get<double>();
    e.f1 = e.report.at("mean").at("f1").get<double>();
    e.n = e.report.at("mean").at("n").get<int>();
    for (const auto& run : e.report.at("seed_runs")) {
      if (!run.at("complete").get<bool>()) ++e.incomplete;
    }
    const std::string name = fs::path(file).filename().string();
    e.label = name.substr(0, name.size() - 12);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string render_summary_table(const std::vector<EvalEntry>& entries) {
  size_t width = 10;
  for (const auto& e : entries) width = std::max(width, e.label.size());
  std::ostringstream out;
  out << "experiment";
  out << std::string(width - 10, ' ');
  out << "      EM      F1      n  incomplete_seeds\n";
  for (const auto& e : entries) {
    out << e.label << std::string(width - e.label.size(), ' ') << fmt(e.em, 8, 2)
        << fmt(e.f1, 8, 2) << fmt(e.n, 7, 0) << fmt(e.incomplete, 18, 0) << "\n";
  }
  return out.str();
}

std::string render_order_sensitivity(const std::vector<EvalEntry>& entries) {
  // Groups that vary only in demonstration order get a block with a
  // population-STD row under the per-order means.
  std::map<std::string, std::vector<const EvalEntry*>> groups;
  for (const auto& e : entries)
    groups["method=" + e.method + " retriever=" + e.retriever + " shots=" +
           std::to_string(e.shots)]
        .push_back(&e);

  std::ostringstream out;
  for (const auto& [key, group] : groups) {
    std::map<std::string, const EvalEntry*> by_order;
    for (const auto* e : group) by_order[e->ordering] = e;
    if (by_order.size() < 2) continue;

    out << key << "\n";
    out << "order            EM      F1\n";
    std::vector<double> ems, f1s;
    size_t owidth = 12;
    for (const auto& [order, e] : by_order) owidth = std::max(owidth, order.size());
    for (const auto& [order, e] : by_order) {
      out << order << std::string(owidth - order.size(), ' ') << fmt(e->em, 8, 2)
          << fmt(e->f1, 8, 2) << "\n";
      ems.push_back(e->em);
      f1s.push_back(e->f1);
    }
    out << "STD" << std::string(owidth - 3, ' ') << fmt(population_std(ems), 8, 2)
        << fmt(population_std(f1s), 8, 2) << "\n\n";
  }
  return out.str();
}

std::string render_shot_curve(std::vector<EvalEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const EvalEntry& a, const EvalEntry& b) {
    return std::tie(a.method, a.retriever, a.ordering, a.shots) <
           std::tie(b.method, b.retriever, b.ordering, b.shots);
  });
  std::string out = "method,retriever,ordering,shots,em,f1\n";
  for (const auto& e : entries) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.4f,%.4f\n", e.method.c_str(),
                  e.retriever.c_str(), e.ordering.c_str(), e.shots, e.em, e.f1);
    out += buf;
  }
  return out;
}

std::string render_rank_histogram_csv(const PipelineConfig& config, bool* any) {
  std::string out = "retriever,bucket,count\n";
  *any = false;
  const std::pair<std::string, std::string> sources[] = {
      {"base", config.out_dir + "/hints.jsonl"}, {"her", config.out_dir + "/hints_her.jsonl"}};
  for (const auto& [retriever, path] : sources) {
    if (!fs::exists(path)) continue;
    *any = true;
    const RankHistogram hist = rank_histogram(read_hints_jsonl(path), config.hints.tau_attr);
    for (const auto& [rank, count] : hist.by_rank)
      out += retriever + "," + std::to_string(rank) + "," + std::to_string(count) + "\n";
    out += retriever + ",none," + std::to_string(hist.none) + "\n";
  }
  return out;
}

}  // namespace

json cmd_report(const PipelineConfig& config) {
  config.validate();
  ensure_snapshot(config);
  const auto entries = load_eval_entries(config.out_dir + "/eval");
  if (entries.empty())
    throw Error("report: no eval reports under " + config.out_dir + "/eval (run eval first)");

  const std::string report_dir = config.out_dir + "/report";
  json files = json::array();

  write_artifact(report_dir + "/summary.txt", render_summary_table(entries));
  files.push_back(report_dir + "/summary.txt");

  const std::string order_table = render_order_sensitivity(entries);
  if (!order_table.empty()) {
    write_artifact(report_dir + "/order_sensitivity.txt", order_table);
    files.push_back(report_dir + "/order_sensitivity.txt");
  }

  write_artifact(report_dir + "/shot_curve.csv", render_shot_curve(entries));
  files.push_back(report_dir + "/shot_curve.csv");

  bool any_hints = false;
  const std::string histogram = render_rank_histogram_csv(config, &any_hints);
  if (any_hints) {
    write_artifact(report_dir + "/rank_histogram.csv", histogram);
    files.push_back(report_dir + "/rank_histogram.csv");
  }

  return {{"command", "report"}, {"experiments", entries.size()}, {"files", files}};
}

}  // namespace hicl
