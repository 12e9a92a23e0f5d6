#include "hicl/hints.hpp"

#include <cctype>
#include <sstream>

#include "hicl/metrics.hpp"

namespace hicl {

namespace {

constexpr std::string_view kInstructionTemplate =
    "Please infer from the following QA-pairs step by step, and return the information related "
    "to [query]. If there is no information, please return \"None\"";

}  // namespace

ExampleSet ExampleSet::from_results(const std::string& query_id, const Corpus& corpus,
                                    const std::vector<RetrievalResult>& results) {
  ExampleSet set;
  set.query_id = query_id;
  for (const auto& r : results) {
    const QAExample* ex = corpus.find(r.example_id);
    if (!ex) throw Error("example set: id \"" + r.example_id + "\" not in corpus");
    set.entries.emplace_back(*ex, r);
  }
  return set;
}

std::string render_hint_prompt(const std::string& query, const ExampleSet& examples) {
  if (examples.entries.empty()) throw Error("render_hint_prompt: empty example set");

  std::string instruction(kInstructionTemplate);
  const auto pos = instruction.find("[query]");
  instruction.replace(pos, 7, query);

  std::ostringstream ss;
  ss << instruction;
  for (const auto& [ex, result] : examples.entries) {
    ss << "\n\nQ: " << ex.question << "\nA: " << ex.answers.front();
  }
  return ss.str();
}

bool is_none_response(const std::string& response) {
  std::string stripped;
  for (char ch : response) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::ispunct(c) || std::isspace(c)) continue;
    stripped.push_back(static_cast<char>(std::tolower(c)));
  }
  return stripped == "none";
}

std::vector<HintAttribution> attribute_hint(const std::string& hint_text,
                                            const ExampleSet& examples) {
  std::vector<HintAttribution> attribution;
  attribution.reserve(examples.entries.size());
  for (const auto& [ex, result] : examples.entries) {
    std::vector<std::string> targets;
    targets.reserve(ex.answers.size());
    for (const auto& alias : ex.answers) targets.push_back(ex.question + " " + alias);
    attribution.push_back({ex.id, token_f1(hint_text, targets)});
  }
  return attribution;
}

Hint extract_hint(ChatClient& llm, const std::string& model_id, const std::string& query_id,
                  const std::string& query, const ExampleSet& examples, int max_tokens) {
  ChatRequest request;
  request.messages.push_back({Role::user, render_hint_prompt(query, examples)});
  request.model_id = model_id;
  request.temperature = 0.0;
  request.max_tokens = max_tokens;
  request.request_tag = "hint:" + query_id;

  ChatResponse response;
  try {
    response = llm.complete(request);
  } catch (const LlmError& e) {
    throw LlmError("hint extraction failed for query \"" + query_id + "\": " + e.what());
  }

  Hint hint;
  hint.query_id = query_id;
  hint.text = trim(response.text);
  hint.model_id = model_id;
  hint.none_flag = is_none_response(hint.text);
  if (!hint.none_flag) hint.source_attribution = attribute_hint(hint.text, examples);
  return hint;
}

std::optional<int> closest_hint_related_rank(const std::vector<HintAttribution>& attribution,
                                             double tau_attr) {
  for (size_t i = 0; i < attribution.size(); ++i) {
    if (attribution[i].overlap_f1 >= tau_attr) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

std::string hints_to_jsonl(const std::vector<Hint>& hints) {
  std::string out;
  for (const auto& h : hints) {
    json attribution = json::array();
    for (const auto& a : h.source_attribution) {
      attribution.push_back({{"example_id", a.example_id}, {"overlap_f1", a.overlap_f1}});
    }
    const json rec = {{"query_id", h.query_id},
                      {"text", h.text},
                      {"none_flag", h.none_flag},
                      {"attribution", attribution},
                      {"model_id", h.model_id}};
    out += rec.dump();
    out += "\n";
  }
  return out;
}

void write_hints_jsonl(const std::string& path, const std::vector<Hint>& hints) {
  write_file(path, hints_to_jsonl(hints));
}

std::vector<Hint> read_hints_jsonl(const std::string& path) {
  std::vector<Hint> hints;
  for_each_line(path, [&](int line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed hint record: " + e.what());
    }
    Hint h;
    h.query_id = j.at("query_id").get<std::string>();
    h.text = j.at("text").get<std::string>();
    h.none_flag = j.at("none_flag").get<bool>();
    h.model_id = j.at("model_id").get<std::string>();
    for (const auto& a : j.at("attribution")) {
      h.source_attribution.push_back(
          {a.at("example_id").get<std::string>(), a.at("overlap_f1").get<double>()});
    }
    hints.push_back(std::move(h));
  });
  return hints;
}

}  // namespace hicl
