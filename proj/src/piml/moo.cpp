#include "piml/moo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "piml/error.hpp"

namespace piml {

GradientSet::GradientSet(std::vector<Vec> g, std::vector<std::string> names)
    : grads(std::move(g)), labels(std::move(names)) {
  if (grads.empty()) fail_validation("gradient set is empty");
  for (const auto& v : grads) {
    if (v.size() != grads.front().size() || v.size() == 0) {
      fail_validation("gradient dimensions differ");
    }
    require_finite(v, "objective gradient");
  }
  if (!labels.empty() && labels.size() != grads.size()) {
    fail_validation("one label per objective gradient");
  }
}

Vec GradientSet::total() const {
  Vec sum = Vec::Zero(dim());
  for (const auto& g : grads) sum += g;
  return sum;
}

SimplexWeights SimplexWeights::uniform(std::size_t n) {
  return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

bool SimplexWeights::valid(double tol) const {
  double sum = 0.0;
  for (const double a : alpha) {
    if (!(a >= 0.0)) return false;
    sum += a;
  }
  return std::abs(sum - 1.0) <= tol;
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::none: return "none";
    case StopReason::stationary: return "stationary";
    case StopReason::gradient_vanished: return "gradient_vanished";
    case StopReason::conflict_threshold: return "conflict_threshold";
    case StopReason::epoch_limit: return "epoch_limit";
  }
  return "unknown";
}

void DcgdConfig::validate() const {
  if (!(learning_rate > 0.0)) fail_validation("learning rate must be positive");
  if (max_epochs < 1) fail_validation("max_epochs must be >= 1");
  if (!(gradient_threshold > 0.0)) fail_validation("gradient threshold must be positive");
  if (!(conflict_threshold > 0.0 && conflict_threshold < std::numbers::pi)) {
    fail_validation("conflict threshold must lie in (0, pi)");
  }
}

double two_gradient_weight(const Vec& g1, const Vec& g2) {
  const Vec diff = g1 - g2;
  const double denom = diff.squaredNorm();
  if (!(denom > 0.0)) return 0.5;
  return std::clamp((g2 - g1).dot(g2) / denom, 0.0, 1.0);
}

namespace {

Vec combine(const GradientSet& grads, const std::vector<double>& alpha) {
  Vec x = Vec::Zero(grads.dim());
  for (std::size_t j = 0; j < grads.size(); ++j) x += alpha[j] * grads.grads[j];
  return x;
}

// Exact minimum-norm point by checking the affine minimiser of every face
// of the simplex. Only used to polish a Frank-Wolfe iterate for a handful
// of objectives. Each face is solved as least squares on the gradients
// themselves (not the Gram matrix) to keep the conditioning.
std::vector<double> face_enumeration(const std::vector<Vec>& grads) {
  const auto n = static_cast<Eigen::Index>(grads.size());
  const Eigen::Index dim = grads.front().size();
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  const std::uint32_t subsets = 1u << n;
  for (std::uint32_t mask = 1; mask < subsets; ++mask) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    if (k == 1) {
      a[idx[0]] = 1.0;
    } else {
      // x = g_last + D beta with D = [g_j - g_last]; minimise |x|
      const Vec& anchor = grads[static_cast<std::size_t>(idx.back())];
      Matrix d(dim, k - 1);
      for (Eigen::Index c = 0; c + 1 < k; ++c) {
        d.col(c) = grads[static_cast<std::size_t>(idx[c])] - anchor;
      }
      Eigen::ColPivHouseholderQR<Matrix> qr(d);
      qr.setThreshold(1e-12);
      if (qr.rank() < k - 1) continue;
      const Eigen::VectorXd beta = qr.solve(-anchor);
      if ((beta.array() < -1e-12).any() || beta.sum() > 1.0 + 1e-12) continue;
      for (Eigen::Index c = 0; c + 1 < k; ++c) a[idx[c]] = std::max(0.0, beta[c]);
      a[idx.back()] = std::max(0.0, 1.0 - beta.sum());
      a /= a.sum();
    }
    Vec x = Vec::Zero(dim);
    for (Eigen::Index j = 0; j < n; ++j) x += a[j] * grads[static_cast<std::size_t>(j)];
    const double value = x.squaredNorm();
    if (value < best_value) {
      best_value = value;
      best.assign(a.data(), a.data() + n);
    }
  }
  return best;
}

constexpr Eigen::Index kMaxPolishObjectives = 16;

}  // namespace

MinNormResult frank_wolfe_min_norm(const GradientSet& grads,
                                   const FrankWolfeOptions& opts) {
  if (grads.size() == 0) fail_validation("min-norm of an empty gradient set");
  const std::size_t n = grads.size();
  if (n == 1) {
    return {SimplexWeights{{1.0}}, grads.grads[0], 0};
  }
  if (n == 2 && opts.closed_form_pair) {
    const double a = two_gradient_weight(grads.grads[0], grads.grads[1]);
    SimplexWeights w{{a, 1.0 - a}};
    return {w, combine(grads, w.alpha), 0};
  }

  const Matrix gram = gram_matrix(grads.grads);
  Eigen::VectorXd alpha =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    const Eigen::VectorXd m_alpha = gram * alpha;
    const double x_sq = alpha.dot(m_alpha);
    Eigen::Index vertex = 0;
    const double x_dot_vertex = m_alpha.minCoeff(&vertex);
    if (x_sq - x_dot_vertex <= opts.tol) break;  // Wolfe's criterion
    // argmin over gamma of |(1 - gamma) x + gamma g_vertex|^2
    const double denom = x_sq - 2.0 * x_dot_vertex + gram(vertex, vertex);
    if (!(denom > 0.0)) break;
    const double gamma = std::clamp((x_sq - x_dot_vertex) / denom, 0.0, 1.0);
    if (gamma <= 1e-14) break;
    alpha *= (1.0 - gamma);
    alpha[vertex] += gamma;
  }

  MinNormResult result{SimplexWeights{{alpha.data(), alpha.data() + alpha.size()}},
                       Vec{}, it};
  result.point = combine(grads, result.weights.alpha);
  if (wolfe_certificate(result.point, grads) < -opts.tol &&
      gram.rows() <= kMaxPolishObjectives) {
    auto polished = face_enumeration(grads.grads);
    if (!polished.empty()) {
      Vec candidate = combine(grads, polished);
      if (wolfe_certificate(candidate, grads) > wolfe_certificate(result.point, grads)) {
        result.weights.alpha = std::move(polished);
        result.point = std::move(candidate);
      }
    }
  }
  return result;
}

double wolfe_certificate(const Vec& x, const GradientSet& grads) {
  const double x_sq = x.squaredNorm();
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& g : grads.grads) {
    if (g.size() != x.size()) fail_validation("dimension mismatch in certificate");
    worst = std::min(worst, x.dot(g) - x_sq);
  }
  return worst;
}

bool dual_cone_contains(const Vec& v, const GradientSet& grads) {
  for (const auto& g : grads.grads) {
    if (g.size() != v.size()) fail_validation("dimension mismatch in dual cone test");
    if (v.dot(g) < 0.0) return false;
  }
  return true;
}

CombineOutcome tmgd_combine(const GradientSet& grads, const FrankWolfeOptions& opts) {
  MinNormResult mn = frank_wolfe_min_norm(grads, opts);
  CombineOutcome out;
  out.weights = std::move(mn.weights);
  out.direction = std::move(mn.point);
  if (grads.size() == 2 && grads.grads[0].norm() > 0.0 && grads.grads[1].norm() > 0.0) {
    out.angle = angle_between(grads.grads[0], grads.grads[1]);
  }
  out.stationary = out.direction.norm() <= opts.tol;
  if (out.stationary) {
    out.stop = StopReason::stationary;
    out.direction.setZero();
  }
  return out;
}

namespace {

// Shared stop rule of the dual-cone combiners. Returns true if the caller
// should stop; `out` then holds a zero direction.
bool dcgd_stop(const GradientSet& grads, const DcgdConfig& cfg, CombineOutcome& out) {
  if (grads.size() != 2) fail_validation("dual-cone combiners take exactly two objectives");
  const Vec& gb = grads.grads[0];
  const Vec& gr = grads.grads[1];
  out.direction = Vec::Zero(grads.dim());
  if (!(gb.norm() > 0.0) || !(gr.norm() > 0.0)) {
    out.stop = StopReason::stationary;
  } else {
    out.angle = angle_between(gb, gr);
    // Fires when the gradients are nearly opposed (angle close to pi).
    if (std::numbers::pi - cfg.conflict_threshold < out.angle) {
      out.stop = StopReason::conflict_threshold;
    } else if ((gb + gr).norm() < cfg.gradient_threshold) {
      out.stop = StopReason::gradient_vanished;
    }
  }
  out.stationary = out.stop != StopReason::none;
  return out.stationary;
}

void finish(CombineOutcome& out) {
  require_finite(out.direction, "combined direction");
  out.stationary = out.direction.norm() <= kStationarityTol;
}

}  // namespace

CombineOutcome dcgd_center(const GradientSet& grads, const DcgdConfig& cfg) {
  CombineOutcome out;
  if (dcgd_stop(grads, cfg, out)) return out;
  const Vec& gb = grads.grads[0];
  const Vec& gr = grads.grads[1];
  const Vec center = gb / gb.norm() + gr / gr.norm();
  out.direction = project_onto(gb + gr, center);
  finish(out);
  return out;
}

CombineOutcome dcgd_average(const GradientSet& grads, const DcgdConfig& cfg) {
  CombineOutcome out;
  if (dcgd_stop(grads, cfg, out)) return out;
  const Vec& gb = grads.grads[0];
  const Vec& gr = grads.grads[1];
  const Vec total = gb + gr;
  if (dual_cone_contains(total, grads)) {
    out.direction = total;
  } else {
    out.direction = 0.5 * project_onto_complement(total, gr) +
                    0.5 * project_onto_complement(total, gb);
  }
  finish(out);
  return out;
}

CombineOutcome dcgd_projection(const GradientSet& grads, const DcgdConfig& cfg) {
  CombineOutcome out;
  if (dcgd_stop(grads, cfg, out)) return out;
  const Vec& gb = grads.grads[0];
  const Vec& gr = grads.grads[1];
  const Vec total = gb + gr;
  if (dual_cone_contains(total, grads)) {
    out.direction = total;
  } else if (total.dot(gr) < 0.0) {
    out.direction = project_onto_complement(total, gr);
  } else {
    // <total, gb> < 0: both inner products cannot be negative since they
    // sum to |total|^2.
    out.direction = project_onto_complement(total, gb);
  }
  finish(out);
  return out;
}

bool stationarity_check(const GradientSet& grads, double tol) {
  bool all_small = true;
  for (const auto& g : grads.grads) all_small = all_small && g.norm() <= tol;
  if (all_small) return true;
  FrankWolfeOptions opts;
  opts.tol = std::min(opts.tol, tol);
  return frank_wolfe_min_norm(grads, opts).point.norm() <= tol;
}

}  // namespace piml
