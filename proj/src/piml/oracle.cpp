#include "piml/oracle.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "piml/error.hpp"
#include "piml/moo.hpp"

namespace piml {

double brute_force_min_norm(std::span<const Vec> grads, double step) {
  if (grads.empty()) fail_validation("brute force needs at least one gradient");
  const long ticks = std::lround(1.0 / step);
  if (ticks < 1 || std::abs(static_cast<double>(ticks) * step - 1.0) > 1e-12) {
    fail_validation("grid step must divide 1");
  }
  const Matrix gram = gram_matrix(grads);
  const auto n = gram.rows();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
  double best = std::numeric_limits<double>::infinity();
  const double inv = 1.0 / static_cast<double>(ticks);

  // enumerate integer compositions of `ticks` into n parts
  std::function<void(Eigen::Index, long)> walk = [&](Eigen::Index i, long left) {
    if (i == n - 1) {
      counts[i] = static_cast<double>(left);
      const Eigen::VectorXd a = counts * inv;
      best = std::min(best, a.dot(gram * a));
      return;
    }
    for (long c = 0; c <= left; ++c) {
      counts[i] = static_cast<double>(c);
      walk(i + 1, left - c);
    }
  };
  walk(0, ticks);
  return std::sqrt(std::max(0.0, best));
}

OracleReport run_min_norm_oracle(int instances, std::uint64_t seed, double grid_step) {
  if (instances < 1) fail_validation("oracle needs at least one instance");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  OracleReport report;
  report.instances = instances;
  report.min_certificate = std::numeric_limits<double>::infinity();

  for (int k = 0; k < instances; ++k) {
    const bool pair = k % 2 == 0;
    const int objectives = pair ? 2 : 3;
    std::uniform_int_distribution<int> dim_dist(pair ? 2 : 3, 10);
    const int dim = dim_dist(rng);
    std::vector<Vec> g;
    for (int j = 0; j < objectives; ++j) {
      Vec v(dim);
      for (int i = 0; i < dim; ++i) v[i] = normal(rng);
      g.push_back(std::move(v));
    }
    const GradientSet set(g);
    const MinNormResult fw = frank_wolfe_min_norm(set);
    const double grid = brute_force_min_norm(g, grid_step);
    report.max_grid_deviation =
        std::max(report.max_grid_deviation, std::abs(fw.point.norm() - grid));
    if (fw.point.norm() > kStationarityTol) {
      report.min_certificate =
          std::min(report.min_certificate, wolfe_certificate(fw.point, set));
    }
    if (pair) {
      FrankWolfeOptions general;
      general.closed_form_pair = false;
      const MinNormResult iterative = frank_wolfe_min_norm(set, general);
      const double a = two_gradient_weight(g[0], g[1]);
      const Vec closed = a * g[0] + (1.0 - a) * g[1];
      report.max_closed_form_deviation =
          std::max({report.max_closed_form_deviation, (iterative.point - closed).norm(),
                    std::abs(fw.point.norm() - closed.norm())});
    }
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace piml
