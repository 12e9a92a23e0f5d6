#pragma once

#include <string>
#include <vector>

namespace hicl {

// Answer normalization for EM/F1 scoring: lowercase, drop ASCII punctuation,
// drop the articles {a, an, the}, split on whitespace.
std::vector<std::string> normalize_answer(const std::string& text);

// 1 iff the normalized prediction equals some normalized gold alias.
int exact_match(const std::string& prediction, const std::vector<std::string>& golds);

// Bag-of-tokens F1 between two already-normalized token lists.
// Both bags empty -> 1, exactly one empty -> 0.
double token_f1_pair(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Max over gold aliases of the bag-of-tokens F1 against the prediction.
double token_f1(const std::string& prediction, const std::vector<std::string>& golds);

// Population standard deviation (divide by N). Requires at least 2 scores.
double population_std(const std::vector<double>& scores);

}  // namespace hicl
