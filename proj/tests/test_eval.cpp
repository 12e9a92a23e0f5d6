#include <doctest.h>

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hicl/embedder.hpp"
#include "hicl/eval.hpp"
#include "hicl/util.hpp"
#include "support/fixtures.hpp"

using hicl::ExperimentConfig;
using hicl::Method;
using hicl::OrderPolicy;
using hicl::RankedExample;
using hicl::Transcript;

namespace {

std::vector<RankedExample> ranked_fixture(int n) {
  std::vector<RankedExample> out;
  for (int i = 1; i <= n; ++i) {
    const std::string id = "e" + std::to_string(i);
    out.push_back({fixtures::qa(id, "question " + std::to_string(i) + "?",
                                {"answer " + std::to_string(i)}),
                   hicl::RetrievalResult{id, 1.0 - 0.1 * i, i}});
  }
  return out;
}

std::vector<std::string> ids_of(const std::vector<RankedExample>& v) {
  std::vector<std::string> out;
  for (const auto& [ex, r] : v) out.push_back(ex.id);
  return out;
}

}  // namespace

TEST_CASE("method and ordering names round-trip") {
  for (Method m : {Method::zero_shot, Method::standard_icl, Method::recite, Method::hicl}) {
    CHECK(hicl::method_from_name(hicl::method_name(m)) == m);
  }
  CHECK(hicl::method_name(Method::standard_icl) == "standard_icl");
  CHECK(hicl::method_name(Method::hicl) == "hicl");
  CHECK_THROWS_AS((void)hicl::method_from_name("vibes"), hicl::Error);

  for (OrderPolicy p : {OrderPolicy::default_order, OrderPolicy::reverse, OrderPolicy::random}) {
    CHECK(hicl::order_policy_from_name(hicl::order_policy_name(p)) == p);
  }
  CHECK(hicl::order_policy_name(OrderPolicy::default_order) == "default");
  CHECK_THROWS_AS((void)hicl::order_policy_from_name("sorted"), hicl::Error);
}

TEST_CASE("ordering policies: default puts the best match next to the query") {
  const auto ranked = ranked_fixture(3);
  CHECK(ids_of(hicl::order_examples(ranked, OrderPolicy::default_order)) ==
        std::vector<std::string>{"e3", "e2", "e1"});
  CHECK(ids_of(hicl::order_examples(ranked, OrderPolicy::reverse)) ==
        std::vector<std::string>{"e1", "e2", "e3"});

  // reverse is the exact mirror of default.
  auto def = ids_of(hicl::order_examples(ranked, OrderPolicy::default_order));
  std::reverse(def.begin(), def.end());
  CHECK(def == ids_of(hicl::order_examples(ranked, OrderPolicy::reverse)));

  CHECK_THROWS_WITH_AS((void)hicl::order_examples({}, OrderPolicy::default_order),
                       doctest::Contains("empty example list"), hicl::Error);
}

TEST_CASE("ordering policies: random is a seeded permutation") {
  const auto ranked = ranked_fixture(6);
  const auto a = ids_of(hicl::order_examples(ranked, OrderPolicy::random, 42));
  const auto b = ids_of(hicl::order_examples(ranked, OrderPolicy::random, 42));
  CHECK(a == b);

  const auto retrieval = ids_of(ranked);
  CHECK(std::multiset<std::string>(a.begin(), a.end()) ==
        std::multiset<std::string>(retrieval.begin(), retrieval.end()));

  bool any_differs = false;
  for (uint64_t seed = 1; seed <= 10 && !any_differs; ++seed) {
    any_differs = ids_of(hicl::order_examples(ranked, OrderPolicy::random, seed)) != retrieval;
  }
  CHECK(any_differs);
}

TEST_CASE("prompt rendering matches the documented blocks exactly") {
  const auto ranked = ranked_fixture(2);
  const auto ordered = hicl::order_examples(ranked, OrderPolicy::default_order);

  CHECK(hicl::render_demonstrations(ordered) ==
        "Q: question 2?\nA: answer 2\n\nQ: question 1?\nA: answer 1");

  CHECK(hicl::render_answer_prompt(Method::zero_shot, {}, std::nullopt, "What is it?") ==
        "Q: What is it?\nA:");

  const std::string standard =
      hicl::render_answer_prompt(Method::standard_icl, ordered, std::nullopt, "What is it?");
  CHECK(standard ==
        "Q: question 2?\nA: answer 2\n\nQ: question 1?\nA: answer 1\n\nQ: What is it?\nA:");

  const std::string hicl_prompt = hicl::render_answer_prompt(
      Method::hicl, ordered, std::optional<std::string>{"the key fact"}, "What is it?");
  CHECK(hicl_prompt == "Q: question 2?\nA: answer 2\n\nQ: question 1?\nA: answer 1\n\n"
                       "Hint: the key fact\n\nQ: What is it?\nA:");

  // No hint: silently falls back to the standard prompt unless told not to.
  CHECK(hicl::render_answer_prompt(Method::hicl, ordered, std::nullopt, "What is it?") ==
        standard);
  CHECK_THROWS_WITH_AS((void)hicl::render_answer_prompt(Method::hicl, ordered, std::nullopt,
                                                        "What is it?", false),
                       doctest::Contains("fallback disabled"), hicl::Error);

  CHECK(hicl::render_answer_prompt(Method::recite, ordered,
                                   std::optional<std::string>{"once upon a time"}, "What is it?") ==
        "Q: question 2?\nA: answer 2\n\nQ: question 1?\nA: answer 1\n\n"
        "Passage: once upon a time\n\nQ: What is it?\nA:");
  CHECK_THROWS_WITH_AS(
      (void)hicl::render_answer_prompt(Method::recite, ordered, std::nullopt, "x"),
      doctest::Contains("stage-1 passage"), hicl::Error);

  CHECK(hicl::render_recite_stage1("Who wrote it?") ==
        "Recite a passage from your own memory that is related to the following question.\n\n"
        "Q: Who wrote it?\nPassage:");
}

TEST_CASE("answer extraction keeps the first line, trimmed") {
  CHECK(hicl::extract_answer("Paris") == "Paris");
  CHECK(hicl::extract_answer("  Paris  ") == "Paris");
  CHECK(hicl::extract_answer("Paris\nBecause it is the capital.") == "Paris");
  CHECK(hicl::extract_answer("\n\n  Madrid  \nmore") == "Madrid");
  CHECK(hicl::extract_answer("   ") == "");
  CHECK(hicl::extract_answer("one two\tthree\nrest") == "one two\tthree");
}

TEST_CASE("experiment config validation") {
  ExperimentConfig config;
  CHECK_NOTHROW(config.validate());
  CHECK(config.effective_shots() == 5);

  ExperimentConfig zs = config;
  zs.method = Method::zero_shot;
  zs.shots = 0;
  CHECK_NOTHROW(zs.validate());
  zs.shots = 7;  // ignored for zero-shot
  CHECK(zs.effective_shots() == 0);
  CHECK_NOTHROW(zs.validate());

  ExperimentConfig bad = config;
  bad.shots = 0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("needs shots >= 1"), hicl::Error);
  bad = config;
  bad.shots = -1;
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
  bad = config;
  bad.seeds = {3, 3};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("distinct"), hicl::Error);
  bad = config;
  bad.seeds = {};
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
  bad = config;
  bad.n_queries = 0;
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
  bad = config;
  bad.tau_attr = 1.5;
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
  bad = config;
  bad.retriever = "fancy";
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
  bad = config;
  bad.retriever = "her";
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("checkpoint"), hicl::Error);
  bad = config;
  bad.max_tokens = 0;
  CHECK_THROWS_AS(bad.validate(), hicl::Error);
}

namespace {

struct PlantedRig {
  fixtures::PlantedFixture fx;
  std::unique_ptr<hicl::CachingEmbedder> embedder;
  hicl::Index index;
  hicl::MockChatClient llm{"None"};

  explicit PlantedRig(bool with_rules = true) {
    fx = fixtures::make_planted_fixture();
    embedder = std::make_unique<hicl::CachingEmbedder>(
        std::make_unique<hicl::MockEmbedder>(32, 3));
    index = hicl::Index::build(fx.corpus, *embedder);
    if (with_rules) {
      for (const auto& [pattern, response] : fx.hint_rules) llm.add_rule(pattern, response);
      for (const auto& [pattern, response] : fx.answer_rules) llm.add_rule(pattern, response);
    }
  }

  ExperimentConfig config(Method m) const {
    ExperimentConfig c;
    c.method = m;
    c.shots = 3;
    c.seeds = {1, 2};
    c.n_queries = static_cast<int>(fx.test_queries.size());
    c.llm_model_id = "mock";
    return c;
  }

  hicl::ExperimentReport run(Method m) {
    return hicl::run_experiment(config(m), fx.test_queries, fx.corpus, index, *embedder, llm);
  }
};

}  // namespace

TEST_CASE("the planted hint task separates hicl from standard prompting") {
  PlantedRig rig;
  const auto hicl_report = rig.run(Method::hicl);
  const auto standard_report = rig.run(Method::standard_icl);

  CHECK(hicl_report.mean.em == doctest::Approx(100.0));
  CHECK(hicl_report.mean.f1 == doctest::Approx(100.0));
  CHECK(standard_report.mean.em == doctest::Approx(0.0));
  CHECK(hicl_report.mean.em > standard_report.mean.em);

  for (const auto& run : hicl_report.seed_runs) {
    CHECK(run.complete);
    CHECK(run.failures == 0);
    CHECK(run.scores.em == doctest::Approx(100.0));
    CHECK(run.scores.n == static_cast<int>(rig.fx.test_queries.size()));
    for (const auto& t : run.transcripts) {
      CHECK_FALSE(t.hint_none);
      REQUIRE(t.hint_text.has_value());
      CHECK(t.prompt.find("Hint: " + *t.hint_text) != std::string::npos);
      CHECK(t.f1 >= t.em);
      CHECK(static_cast<int>(t.demo_ids.size()) == 3);
      CHECK(t.demo_ids.size() == t.demo_texts.size());
    }
  }
}

TEST_CASE("hicl degrades to exactly the standard run when every hint is None") {
  PlantedRig rig(/*with_rules=*/false);  // default response: None for everything
  const auto hicl_report = rig.run(Method::hicl);
  const auto standard_report = rig.run(Method::standard_icl);

  CHECK(hicl_report.mean.em == doctest::Approx(standard_report.mean.em));
  CHECK(hicl_report.mean.f1 == doctest::Approx(standard_report.mean.f1));
  REQUIRE(hicl_report.seed_runs.size() == standard_report.seed_runs.size());
  for (size_t s = 0; s < hicl_report.seed_runs.size(); ++s) {
    const auto& h = hicl_report.seed_runs[s].transcripts;
    const auto& b = standard_report.seed_runs[s].transcripts;
    REQUIRE(h.size() == b.size());
    for (size_t i = 0; i < h.size(); ++i) {
      CHECK(h[i].hint_none);
      CHECK_FALSE(h[i].hint_text.has_value());
      CHECK(h[i].prompt == b[i].prompt);  // fallback renders the standard prompt
      CHECK(h[i].answer == b[i].answer);
    }
  }
}

TEST_CASE("methods are evaluated on the same seeded query sample") {
  PlantedRig rig;
  auto config = rig.config(Method::hicl);
  config.n_queries = 3;  // strict subset so the sample actually selects
  const auto a =
      hicl::run_experiment(config, rig.fx.test_queries, rig.fx.corpus, rig.index, *rig.embedder,
                           rig.llm);
  config.method = Method::standard_icl;
  const auto b =
      hicl::run_experiment(config, rig.fx.test_queries, rig.fx.corpus, rig.index, *rig.embedder,
                           rig.llm);

  REQUIRE(a.seed_runs.size() == b.seed_runs.size());
  for (size_t s = 0; s < a.seed_runs.size(); ++s) {
    std::vector<std::string> ia, ib;
    for (const auto& t : a.seed_runs[s].transcripts) ia.push_back(t.query_id);
    for (const auto& t : b.seed_runs[s].transcripts) ib.push_back(t.query_id);
    CHECK(ia == ib);
    CHECK(ia.size() == 3);
  }
  // Different seeds pick different samples (contents, not just order).
  std::set<std::string> s1, s2;
  for (const auto& t : a.seed_runs[0].transcripts) s1.insert(t.query_id);
  for (const auto& t : a.seed_runs[1].transcripts) s2.insert(t.query_id);
  CHECK(a.seed_runs[0].seed != a.seed_runs[1].seed);
  // (the two 3-of-5 samples may coincide as sets, but the runs stay seeded)
  CHECK(s1.size() == 3);
  CHECK(s2.size() == 3);
}

TEST_CASE("experiment runs are deterministic end to end") {
  PlantedRig rig;
  const auto a = rig.run(Method::hicl);
  const auto b = rig.run(Method::hicl);
  CHECK(hicl::report_to_json(a).dump() == hicl::report_to_json(b).dump());
  CHECK(hicl::transcripts_to_jsonl(a) == hicl::transcripts_to_jsonl(b));
}

namespace {

// Throws on any prompt mentioning the poison token; otherwise delegates.
struct PoisonedClient : hicl::ChatClient {
  hicl::MockChatClient inner;
  std::string poison;
  PoisonedClient(hicl::MockChatClient&& m, std::string p)
      : inner(std::move(m)), poison(std::move(p)) {}
  hicl::ChatResponse complete(const hicl::ChatRequest& request) override {
    for (const auto& m : request.messages) {
      if (m.text.find(poison) != std::string::npos)
        throw hicl::TimeoutError("chat endpoint timed out after 4 attempts", 4);
    }
    return inner.complete(request);
  }
};

}  // namespace

TEST_CASE("provider failures are quarantined per query, not fatal") {
  PlantedRig rig;
  hicl::MockChatClient mock{"None"};
  for (const auto& [pattern, response] : rig.fx.hint_rules) mock.add_rule(pattern, response);
  for (const auto& [pattern, response] : rig.fx.answer_rules) mock.add_rule(pattern, response);
  // The full question is unique to pq2's prompts; the bare token "mexa2" also
  // appears in demo bg2, which other queries may legitimately retrieve.
  PoisonedClient llm(std::move(mock), "secret code of mexa2?");

  const auto report = hicl::run_experiment(rig.config(Method::hicl), rig.fx.test_queries,
                                           rig.fx.corpus, rig.index, *rig.embedder, llm);
  for (const auto& run : report.seed_runs) {
    CHECK_FALSE(run.complete);
    CHECK(run.failures == 1);
    CHECK(run.scores.n == static_cast<int>(rig.fx.test_queries.size()) - 1);
    CHECK(run.scores.em == doctest::Approx(100.0));  // the survivors all score
    int errored = 0;
    for (const auto& t : run.transcripts) {
      if (!t.error.empty()) {
        ++errored;
        CHECK(t.query_id == "pq2");
        CHECK(t.error.find("timed out") != std::string::npos);
        CHECK(t.em == 0.0);
      }
    }
    CHECK(errored == 1);
  }
}

TEST_CASE("test queries must not shadow demonstration ids") {
  PlantedRig rig;
  auto queries = rig.fx.test_queries;
  queries.push_back(rig.fx.corpus.examples.front());
  auto config = rig.config(Method::standard_icl);
  CHECK_THROWS_WITH_AS((void)hicl::run_experiment(config, queries, rig.fx.corpus, rig.index,
                                                  *rig.embedder, rig.llm),
                       doctest::Contains("also appears in the demonstration corpus"), hicl::Error);
  CHECK_THROWS_WITH_AS((void)hicl::run_experiment(config, {}, rig.fx.corpus, rig.index,
                                                  *rig.embedder, rig.llm),
                       doctest::Contains("empty test set"), hicl::Error);
}

namespace {

// Wrapper that records every request before delegating.
struct RecordingClient : hicl::ChatClient {
  hicl::ChatClient& inner;
  std::vector<hicl::ChatRequest> seen;
  explicit RecordingClient(hicl::ChatClient& c) : inner(c) {}
  hicl::ChatResponse complete(const hicl::ChatRequest& request) override {
    seen.push_back(request);
    return inner.complete(request);
  }
};

}  // namespace

TEST_CASE("recite runs two stages with the right budgets and tags") {
  PlantedRig rig;
  hicl::MockChatClient mock{"None"};
  mock.add_rule("memory that is related to the following question.\n\nQ: What is the secret code",
                "The vault password is hunter2.");
  mock.add_rule("Passage: The vault password is hunter2.", "hunter2");
  RecordingClient llm(mock);

  auto config = rig.config(Method::recite);
  config.seeds = {1};
  config.n_queries = 1;
  config.max_tokens = 32;
  std::vector<hicl::QAExample> queries = {
      fixtures::qa("rq0", "What is the secret code of the vault?", {"hunter2"})};
  const auto report =
      hicl::run_experiment(config, queries, rig.fx.corpus, rig.index, *rig.embedder, llm);

  CHECK(report.mean.em == doctest::Approx(100.0));
  REQUIRE(report.seed_runs.size() == 1);
  const auto& t = report.seed_runs[0].transcripts.at(0);
  REQUIRE(t.hint_text.has_value());
  CHECK(*t.hint_text == "The vault password is hunter2.");
  CHECK(t.prompt.find("Passage: The vault password is hunter2.") != std::string::npos);

  REQUIRE(llm.seen.size() == 2);
  CHECK(llm.seen[0].request_tag == "recite:rq0");
  CHECK(llm.seen[0].max_tokens == 256);  // stage 1 gets room to recite
  CHECK(llm.seen[1].request_tag == "answer:recite:rq0");
  CHECK(llm.seen[1].max_tokens == 32);

  const auto j = hicl::report_to_json(report);
  REQUIRE(j.contains("recite_templates"));
  CHECK(j.at("recite_templates").contains("stage1"));
  CHECK(j.at("recite_templates").contains("stage2"));
}

TEST_CASE("report json carries the contract fields") {
  PlantedRig rig;
  const auto report = rig.run(Method::hicl);
  const auto j = hicl::report_to_json(report);
  CHECK(j.at("paired_sampling").get<bool>() == true);
  CHECK_FALSE(j.contains("recite_templates"));
  CHECK(j.at("mean").at("em").get<double>() == doctest::Approx(100.0));
  CHECK(j.at("seed_runs").size() == 2);
  CHECK(j.at("seed_runs")[0].contains("failures"));
  CHECK(j.at("seed_runs")[0].contains("complete"));
  CHECK(j.at("config").at("method").get<std::string>() == "hicl");

  // Round-trip of the embedded config.
  const auto back = hicl::experiment_config_from_json(j.at("config"));
  CHECK(back.method == Method::hicl);
  CHECK(back.shots == 3);
  CHECK(back.seeds == std::vector<uint64_t>{1, 2});
}

TEST_CASE("coverage counts contiguous normalized gold spans in demonstrations") {
  auto t = [](std::vector<std::string> golds, std::vector<std::string> demos, double em,
              std::string error = "") {
    Transcript out;
    out.query_id = "q";
    out.golds = std::move(golds);
    out.demo_texts = std::move(demos);
    out.em = em;
    out.error = std::move(error);
    return out;
  };

  const std::vector<Transcript> transcripts = {
      t({"in 1948"}, {"the war ended in 1948 somewhere"}, 1.0),
      t({"Paris"}, {"paris is lovely"}, 0.0),
      t({"New York"}, {"new jersey today", "york new haven"}, 1.0),  // wrong order: not covered
      t({"a b"}, {}, 0.0),
      t({"x"}, {"x y z"}, 1.0),
      t({"whatever"}, {"whatever"}, 1.0, "provider exploded"),  // errors never count
  };

  const auto stats = hicl::coverage_report(transcripts);
  CHECK(stats.total == 5);
  CHECK(stats.covered == 3);
  CHECK(stats.coverage == doctest::Approx(0.6));
  CHECK(stats.subset_em == doctest::Approx(2.0 / 3.0));

  // Normalization applies to both sides: articles and punctuation vanish.
  const auto n =
      hicl::coverage_report({t({"The Answer!"}, {"here is answer, probably"}, 1.0)});
  CHECK(n.covered == 1);
  // Multi-token spans must be contiguous after normalization.
  const auto gap = hicl::coverage_report({t({"red car"}, {"red old car"}, 0.0)});
  CHECK(gap.covered == 0);
}

TEST_CASE("rank histogram buckets closest-related ranks and skips None hints") {
  auto hint = [](std::string id, std::vector<double> overlaps, bool none = false) {
    hicl::Hint h;
    h.query_id = std::move(id);
    h.text = none ? "None" : "something";
    h.none_flag = none;
    for (size_t i = 0; i < overlaps.size(); ++i) {
      h.source_attribution.push_back({"e" + std::to_string(i + 1), overlaps[i]});
    }
    return h;
  };

  const std::vector<hicl::Hint> hints = {
      hint("q1", {0.9, 0.1}),
      hint("q2", {0.2, 0.8}),
      hint("q3", {0.6}),
      hint("q4", {0.1, 0.05}),
      hint("q5", {}, /*none=*/true),
  };
  const auto histogram = hicl::rank_histogram(hints, 0.5);
  CHECK(histogram.by_rank == std::map<int, int>{{1, 2}, {2, 1}});
  CHECK(histogram.none == 1);
  CHECK(histogram.total() == 4);

  // The threshold is inclusive.
  const auto edge = hicl::rank_histogram({hint("q", {0.5})}, 0.5);
  CHECK(edge.by_rank == std::map<int, int>{{1, 1}});
}

TEST_CASE("transcripts round-trip through JSONL including null fields") {
  fixtures::TempDir dir("transcripts");
  PlantedRig rig;
  const auto report = rig.run(Method::hicl);

  const std::string path = dir.file("t.jsonl");
  hicl::write_file(path, hicl::transcripts_to_jsonl(report));
  const auto back = hicl::read_transcripts_jsonl(path);

  std::vector<Transcript> expected;
  for (const auto& run : report.seed_runs) {
    expected.insert(expected.end(), run.transcripts.begin(), run.transcripts.end());
  }
  REQUIRE(back.size() == expected.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].query_id == expected[i].query_id);
    CHECK(back[i].question == expected[i].question);
    CHECK(back[i].golds == expected[i].golds);
    CHECK(back[i].prompt == expected[i].prompt);
    CHECK(back[i].answer == expected[i].answer);
    CHECK(back[i].em == expected[i].em);
    CHECK(back[i].f1 == expected[i].f1);
    CHECK(back[i].demo_ids == expected[i].demo_ids);
    CHECK(back[i].demo_texts == expected[i].demo_texts);
    CHECK(back[i].hint_text == expected[i].hint_text);
    CHECK(back[i].hint_none == expected[i].hint_none);
    CHECK(back[i].hint_rank == expected[i].hint_rank);
    CHECK(back[i].error == expected[i].error);
    CHECK(back[i].seed == expected[i].seed);
  }

  // A transcript with the optional fields absent serializes them as nulls.
  Transcript bare;
  bare.query_id = "q";
  const auto j = hicl::transcript_to_json(bare);
  CHECK(j.at("hint_text").is_null());
  CHECK(j.at("hint_rank").is_null());
  const auto round = hicl::transcript_from_json(j);
  CHECK_FALSE(round.hint_text.has_value());
  CHECK_FALSE(round.hint_rank.has_value());
}
