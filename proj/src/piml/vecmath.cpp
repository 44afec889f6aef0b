#include "piml/vecmath.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "piml/error.hpp"

namespace piml {

namespace {

void require_same_dim(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    fail_validation("dimension mismatch: " + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()));
  }
  if (a.size() == 0) fail_validation("empty vector");
}

}  // namespace

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    fail_numerical(std::string("non-finite entry in ") + what);
  }
}

Vec project_onto(const Vec& v, const Vec& axis) {
  require_same_dim(v, axis);
  const double axis_sq = axis.squaredNorm();
  if (!(axis_sq > 0.0)) fail_numerical("degenerate projection axis");
  return (v.dot(axis) / axis_sq) * axis;
}

Vec project_onto_complement(const Vec& v, const Vec& axis) {
  return v - project_onto(v, axis);
}

double angle_between(const Vec& u, const Vec& v) {
  require_same_dim(u, v);
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) {
    fail_numerical("angle with a zero vector is undefined");
  }
  const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return std::acos(c);
}

Matrix gram_matrix(std::span<const Vec> gradients) {
  if (gradients.empty()) fail_validation("gram matrix of an empty set");
  const auto n = static_cast<Eigen::Index>(gradients.size());
  for (const auto& g : gradients) require_same_dim(g, gradients.front());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      m(i, j) = m(j, i) = gradients[i].dot(gradients[j]);
    }
  }
  return m;
}

}  // namespace piml
