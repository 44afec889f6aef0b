#pragma once

#include <cstdint>
#include <span>

#include "piml/vecmath.hpp"

namespace piml {

/// Smallest |sum_j a_j g_j| over the simplex lattice with spacing `step`
/// (1/step must be an integer). Exhaustive; meant for a few objectives.
double brute_force_min_norm(std::span<const Vec> grads, double step = 1e-3);

struct OracleReport {
  int instances = 0;
  double max_grid_deviation = 0.0;         // | |x_fw| - grid minimum |
  double max_closed_form_deviation = 0.0;  // pairs, general path vs formula
  double min_certificate = 0.0;            // over outputs with |x| > 1e-8
  double seconds = 0.0;
};

/// Random Gaussian gradient sets: even instances have two objectives in
/// dimension 2..10, odd ones three objectives in dimension 3..10.
OracleReport run_min_norm_oracle(int instances, std::uint64_t seed,
                                 double grid_step = 1e-3);

}  // namespace piml
