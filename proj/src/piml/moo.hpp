#pragma once

#include <numbers>
#include <string>
#include <vector>

#include "piml/vecmath.hpp"

namespace piml {

/// One gradient per objective, each over the full parameter vector
/// (objectives that do not touch a parameter carry a zero there).
struct GradientSet {
  std::vector<Vec> grads;
  std::vector<std::string> labels;

  GradientSet() = default;
  GradientSet(std::vector<Vec> g, std::vector<std::string> names = {});

  std::size_t size() const { return grads.size(); }
  Eigen::Index dim() const { return grads.empty() ? 0 : grads.front().size(); }
  /// Sum of all objective gradients.
  Vec total() const;
};

struct SimplexWeights {
  std::vector<double> alpha;

  static SimplexWeights uniform(std::size_t n);
  bool valid(double tol = 1e-10) const;
};

struct MinNormResult {
  SimplexWeights weights;
  Vec point;
  int iterations = 0;
};

struct FrankWolfeOptions {
  int max_iter = 100;
  double tol = 1e-8;
  /// Use the exact two-gradient formula when there are two objectives.
  bool closed_form_pair = true;
};

/// Minimum-norm point of conv(grads): Frank-Wolfe over the simplex with an
/// exact line search on the Gram matrix, starting from uniform weights.
/// The final iterate is polished on its face so that Wolfe's criterion
/// holds to `tol`.
MinNormResult frank_wolfe_min_norm(const GradientSet& grads,
                                   const FrankWolfeOptions& opts = {});

/// Weight on the first gradient for the minimum-norm point of [g1, g2].
double two_gradient_weight(const Vec& g1, const Vec& g2);

/// min_j (<x, g_j> - |x|^2). Nonnegative (within tolerance) iff x is the
/// minimum-norm point of the hull.
double wolfe_certificate(const Vec& x, const GradientSet& grads);

/// True iff <v, g_j> >= 0 for every objective gradient.
bool dual_cone_contains(const Vec& v, const GradientSet& grads);

struct DcgdConfig {
  double learning_rate = 1e-3;
  int max_epochs = 20000;
  double gradient_threshold = 1e-8;
  double conflict_threshold = 1e-3;  // radians

  void validate() const;
};

enum class StopReason {
  none,
  stationary,
  gradient_vanished,
  conflict_threshold,
  epoch_limit,
};

const char* to_string(StopReason reason);

struct CombineOutcome {
  Vec direction;
  SimplexWeights weights;  // filled by the min-norm combiner only
  bool stationary = false;
  double angle = 0.0;      // angle between the two objective gradients
  StopReason stop = StopReason::none;
};

inline constexpr double kStationarityTol = 1e-8;

/// Negated min-norm direction is a common descent direction.
CombineOutcome tmgd_combine(const GradientSet& grads,
                            const FrankWolfeOptions& opts = {});

// Dual-cone combiners for the pair (data, physics) = (grads[0], grads[1]).
// Each first applies the shared stop rule: conflict angle above
// pi - conflict_threshold, or total gradient norm below the gradient
// threshold, or a vanished objective gradient.
CombineOutcome dcgd_center(const GradientSet& grads, const DcgdConfig& cfg = {});
CombineOutcome dcgd_average(const GradientSet& grads, const DcgdConfig& cfg = {});
CombineOutcome dcgd_projection(const GradientSet& grads, const DcgdConfig& cfg = {});

/// Pareto stationarity: the hull's minimum-norm point has norm <= tol, or
/// every gradient has norm <= tol.
bool stationarity_check(const GradientSet& grads, double tol = kStationarityTol);

}  // namespace piml
