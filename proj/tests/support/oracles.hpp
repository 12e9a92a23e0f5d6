#pragma once

// Deliberately independent re-implementations of the scoring, retrieval and
// gradient math. Tests compare library results against these instead of the
// library against itself.

#include <string>
#include <utility>
#include <vector>

#include "hicl/embedding.hpp"
#include "hicl/her_train.hpp"
#include "hicl/store.hpp"

namespace oracle {

// Normalization + bag-of-tokens scoring, written against different data
// structures (sorted vectors, not hash maps) than the library.
std::vector<std::string> normalize(const std::string& text);
double token_f1_tokens(std::vector<std::string> pred, std::vector<std::string> gold);
double token_f1(const std::string& prediction, const std::vector<std::string>& golds);
int exact_match(const std::string& prediction, const std::vector<std::string>& golds);

double population_std(const std::vector<double>& scores);

double cosine(const hicl::Vec& a, const hicl::Vec& b);

// Top-k by repeated max-selection over all candidates (no sort), ties by
// ascending id. Matches the index contract exactly, including scores.
std::vector<hicl::RetrievalResult> brute_force_topk(
    const std::vector<std::pair<std::string, hicl::Vec>>& entries, const hicl::Vec& query, int k,
    const hicl::ProjectionHead* head = nullptr, const std::string& exclude_id = "");

// Central finite differences of the batch InfoNCE loss w.r.t. every weight.
hicl::Mat finite_difference_gradient(const hicl::ProjectionHead& head,
                                     const std::vector<hicl::EmbeddedTriplet>& batch,
                                     double temperature, double step = 1e-4);

// Largest relative entry error between an analytic and a reference matrix.
double max_relative_error(const hicl::Mat& analytic, const hicl::Mat& reference);

}  // namespace oracle
