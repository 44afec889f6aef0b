#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "piml/autodiff.hpp"
#include "piml/nets.hpp"
#include "piml/physics.hpp"

namespace piml {

// Observation and auxiliary sets hold network-unit inputs; the data module
// builds them from physical rows.

struct MacroObservations {
  Matrix tx;  // (t_n, x_n) rows
  Vec rho;    // rho / rho_scale
  Vec speed;  // u / speed_scale
};

struct MacroAuxiliary {
  Matrix tx;
};

/// Min-max normalization of car-following states: v and h to [0, 1], dv
/// divided by its largest magnitude.
struct CfScales {
  double v_max = 1.0;
  double dv_abs_max = 1.0;
  double h_min = 0.0;
  double h_span = 1.0;

  static CfScales fit(std::span<const CfState> states);
  Matrix normalize(std::span<const CfState> states) const;
  void validate() const;
};

struct CfObservations {
  Matrix inputs;  // normalized (v, dv, h)
  Vec accel;      // observed acceleration, m/s^2
};

struct CfCollocation {
  Matrix inputs;
  std::vector<CfState> states;  // physical states matching `inputs`
};

struct LossWeights {
  double data = 1.0;
  double physics = 1.0;

  void validate() const;
};

/// Density MSE plus speed MSE over the observations.
NodeId lwr_data_loss(Tape& tape, const LwrModel& model, const Vec& params,
                     const MacroObservations& obs);
/// Mean squared conservation residual over the auxiliary points.
NodeId lwr_physics_loss(Tape& tape, const LwrModel& model, const Vec& params,
                        const MacroAuxiliary& aux);
/// MSE of predicted against observed acceleration.
NodeId cf_data_loss(Tape& tape, const Mlp& punn, const Vec& params,
                    const CfObservations& obs);
/// MSE of predicted against IDM acceleration at the collocation states.
NodeId cf_physics_loss(Tape& tape, const Mlp& punn, const Vec& params,
                       const IdmParams& idm, const CfCollocation& coll);

NodeId scalarized(Tape& tape, const LossWeights& w, NodeId data, NodeId physics);
double scalarized(const LossWeights& w, double data, double physics);

struct LossValue {
  double value = 0.0;
  Vec grad;  // empty unless requested
};

using LossBuilder = std::function<NodeId(Tape&)>;

/// Runs `build` on a fresh tape and optionally differentiates the result.
LossValue evaluate_loss(const LossBuilder& build, std::size_t num_params, bool with_grad);

/// n points drawn uniformly from the box [lo, hi] (one column per dim).
Matrix sample_auxiliary(std::span<const double> lo, std::span<const double> hi,
                        std::size_t n, std::uint64_t seed);

/// sum |pred - truth|^2 / sum |truth|^2
double l2_relative_error(std::span<const double> pred, std::span<const double> truth);

/// Root of the pooled mean squared error over all trajectories and steps.
double trajectory_rmse(const std::vector<std::vector<double>>& predicted,
                       const std::vector<std::vector<double>>& actual);

}  // namespace piml
