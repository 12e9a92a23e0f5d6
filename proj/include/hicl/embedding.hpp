#pragma once

#include <string>

#include <Eigen/Core>

namespace hicl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// Cosine similarity. Computed with a plain sequential loop so results are
// bit-reproducible and match a straightforward reference scan.
// Throws on dimension mismatch and on zero-norm inputs.
double similarity(const Vec& a, const Vec& b);

// The learnable HER map: a d x d matrix applied on top of frozen base
// embeddings. A fresh head is the identity, so an untrained HER scores
// exactly like the base retriever.
struct ProjectionHead {
  Mat weights;
  std::string base_model_id;
  int version = 0;

  static ProjectionHead identity(int dim, std::string base_model_id);
  int dim() const { return static_cast<int>(weights.rows()); }
};

// W * v.
Vec project(const ProjectionHead& head, const Vec& v);

// cosine(W*u, W*v). Zero norm after projection signals a degenerate head.
double her_similarity(const ProjectionHead& head, const Vec& u, const Vec& v);

}  // namespace hicl
