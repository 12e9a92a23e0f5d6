#include "hicl/embedding.hpp"

#include <cmath>

#include "hicl/util.hpp"

namespace hicl {

bool all_finite(const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

bool all_finite(const Mat& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!std::isfinite(m(r, c))) return false;
    }
  }
  return true;
}

double similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw Error("similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("similarity: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ProjectionHead ProjectionHead::identity(int dim, std::string base_model_id) {
  ProjectionHead head;
  head.weights = Mat::Identity(dim, dim);
  head.base_model_id = std::move(base_model_id);
  head.version = 0;
  return head;
}

Vec project(const ProjectionHead& head, const Vec& v) {
  if (head.weights.cols() != v.size()) {
    throw Error("project: dimension mismatch (head " + std::to_string(head.weights.cols()) +
                " vs vector " + std::to_string(v.size()) + ")");
  }
  return head.weights * v;
}

double her_similarity(const ProjectionHead& head, const Vec& u, const Vec& v) {
  const Vec pu = project(head, u);
  const Vec pv = project(head, v);
  if (pu.isZero(0.0) || pv.isZero(0.0)) {
    throw Error("her_similarity: zero-norm projection (degenerate head)");
  }
  return similarity(pu, pv);
}

}  // namespace hicl
