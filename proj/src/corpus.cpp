#include "hicl/corpus.hpp"

#include <nlohmann/json.hpp>

#include "hicl/util.hpp"

namespace hicl {

const QAExample* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &examples[it->second];
}

Corpus load_corpus(const std::string& path) {
  Corpus corpus;
  corpus.source_path = path;
  corpus.content_hash = file_content_hash(path);

  for_each_line(path, [&](int line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (!j.is_object() || !j.contains("id") || !j.contains("question") || !j.contains("answers")) {
      throw Error(where + ": expected object with id, question, answers");
    }
    QAExample ex;
    ex.line_no = line_no;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.question = j.at("question").get<std::string>();
      for (const auto& a : j.at("answers")) ex.answers.push_back(a.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(where + ": bad field type: " + e.what());
    }
    if (ex.id.empty()) throw Error(where + ": empty id");
    if (trim(ex.question).empty()) throw Error(where + ": empty question");
    if (ex.answers.empty()) throw Error(where + ": empty answers list for id \"" + ex.id + "\"");
    for (const auto& a : ex.answers) {
      if (trim(a).empty()) throw Error(where + ": blank answer alias for id \"" + ex.id + "\"");
    }
    if (corpus.contains(ex.id)) {
      throw Error(where + ": duplicate id \"" + ex.id + "\"");
    }
    corpus.by_id_.emplace(ex.id, corpus.examples.size());
    corpus.examples.push_back(std::move(ex));
  });

  return corpus;
}

}  // namespace hicl
