#include "hicl/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "hicl/util.hpp"

namespace hicl {

std::vector<std::string> normalize_answer(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && std::isspace(static_cast<unsigned char>(cleaned[i]))) ++i;
    size_t j = i;
    while (j < cleaned.size() && !std::isspace(static_cast<unsigned char>(cleaned[j]))) ++j;
    if (j > i) {
      std::string tok = cleaned.substr(i, j - i);
      if (tok != "a" && tok != "an" && tok != "the") tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

int exact_match(const std::string& prediction, const std::vector<std::string>& golds) {
  if (golds.empty()) throw Error("exact_match: golds must be non-empty");
  const auto pred = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (pred == normalize_answer(g)) return 1;
  }
  return 0;
}

double token_f1_pair(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : a) ++counts[t];
  int common = 0;
  for (const auto& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(a.size());
  const double recall = static_cast<double>(common) / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

double token_f1(const std::string& prediction, const std::vector<std::string>& golds) {
  if (golds.empty()) throw Error("token_f1: golds must be non-empty");
  const auto pred = normalize_answer(prediction);
  double best = 0.0;
  for (const auto& g : golds) {
    best = std::max(best, token_f1_pair(pred, normalize_answer(g)));
  }
  return best;
}

double population_std(const std::vector<double>& scores) {
  if (scores.size() < 2) throw Error("population_std: need at least 2 scores");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  return std::sqrt(var);
}

}  // namespace hicl
