#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace hicl {

// One QA example: a question plus its accepted answer aliases.
struct QAExample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  int line_no = 0;  // source line, kept as tiebreak metadata
};

struct Corpus {
  std::vector<QAExample> examples;  // load order, stable across runs
  std::string source_path;
  uint64_t content_hash = 0;  // hash of the raw file bytes

  const QAExample* find(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
  size_t size() const { return examples.size(); }

  std::unordered_map<std::string, size_t> by_id_;
};

// Loads a JSONL corpus: one {"id", "question", "answers"} object per line.
// Throws on malformed lines (with line number), duplicate ids, empty answer
// lists, and blank aliases or questions.
Corpus load_corpus(const std::string& path);

}  // namespace hicl
