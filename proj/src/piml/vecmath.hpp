#pragma once

#include <span>

#include <Eigen/Dense>

namespace piml {

using Vec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Throws a numerical error if any entry is NaN or infinite.
void require_finite(const Vec& v, const char* what);

/// Component of `v` parallel to `axis`: (<v,axis>/|axis|^2) axis.
/// A zero axis is an error ("degenerate projection axis").
Vec project_onto(const Vec& v, const Vec& axis);

/// v - project_onto(v, axis); orthogonal to `axis`.
Vec project_onto_complement(const Vec& v, const Vec& axis);

/// Angle in [0, pi]; the cosine is clamped to [-1, 1] before arccos.
double angle_between(const Vec& u, const Vec& v);

/// M_ij = <g_i, g_j>.
Matrix gram_matrix(std::span<const Vec> gradients);

}  // namespace piml
