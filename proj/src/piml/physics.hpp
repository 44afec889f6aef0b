#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "piml/autodiff.hpp"
#include "piml/nets.hpp"

namespace piml {

// ---------------------------------------------------------------------------
// Intelligent driver model

/// Parameters of the intelligent driver model, SI units.
struct IdmParams {
  double v0 = 30.0;    // desired speed, m/s
  double T0 = 1.5;     // desired time headway, s
  double s0 = 2.0;     // minimum spacing, m
  double a_max = 1.0;  // maximum acceleration, m/s^2
  double b = 2.0;      // comfortable deceleration, m/s^2
  double delta = 4.0;  // free-road exponent

  static constexpr std::size_t kCount = 6;

  void validate() const;
  std::array<double, kCount> to_array() const;
  static IdmParams from_array(const std::array<double, kCount>& a);

  friend bool operator==(const IdmParams&, const IdmParams&) = default;
};

/// Follower state: speed, approach rate (follower minus leader speed) and
/// spacing to the leader.
struct CfState {
  double v = 0.0;
  double dv = 0.0;
  double h = 1.0;
};

/// a = a_max [1 - (v/v0)^delta - (s*/h)^2],
/// s* = s0 + v T0 + v dv / (2 sqrt(a_max b)).
double idm_acceleration(const CfState& state, const IdmParams& p);

using AccelModel = std::function<double(const CfState&)>;

struct RolloutResult {
  std::vector<double> x;
  std::vector<double> v;
  bool collision = false;
};

inline constexpr double kCollisionSpacing = 1e-3;

/// Explicit Euler car-following rollout against a recorded leader. At each
/// step: v <- max(0, v + a dt), then x <- x + v dt. Nonpositive spacing sets
/// the collision flag and is clamped to kCollisionSpacing. Output has one
/// entry per leader sample.
RolloutResult rollout(double x0, double v0, std::span<const double> leader_x,
                      std::span<const double> leader_v, const AccelModel& accel,
                      double dt);

// ---------------------------------------------------------------------------
// Genetic calibration of the IDM

struct ParamBounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct GaConfig {
  int population = 100;
  int generations = 200;
  double crossover_rate = 0.9;
  double mutation_rate = 0.2;
  /// Initial mutation std as a fraction of each bound's width; decays
  /// geometrically to `final_mutation_ratio` of that by the last generation.
  double mutation_scale = 0.1;
  double final_mutation_ratio = 1e-3;
  double blend_alpha = 0.5;
  std::array<ParamBounds, IdmParams::kCount> bounds{{
      {10.0, 40.0},  // v0
      {0.5, 3.0},    // T0
      {0.5, 6.0},    // s0
      {0.2, 3.0},    // a_max
      {0.5, 4.0},    // b
      {1.0, 8.0},    // delta
  }};
  bool calibrate_delta = false;
  double fixed_delta = 4.0;
  /// Levenberg-Marquardt refinement of the final elite, kept only if it
  /// lowers the fitness inside the bounds.
  bool polish = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct CalibrationSample {
  CfState state;
  double accel = 0.0;
};

struct GaGeneration {
  int generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
};

struct CalibrationResult {
  IdmParams params;
  double fitness = 0.0;
  std::vector<GaGeneration> log;
};

/// Mean squared acceleration error of the IDM over the samples.
double idm_fitness(const IdmParams& p, std::span<const CalibrationSample> samples);

/// Real-coded GA: tournament selection (k = 2), blend crossover, Gaussian
/// mutation, elitism of one. Deterministic for a fixed seed.
CalibrationResult calibrate_idm(std::span<const CalibrationSample> samples,
                                const GaConfig& cfg);

// ---------------------------------------------------------------------------
// LWR conservation law through a density network and an FD learner

/// Affine maps between physical units and network units. Networks see
/// t_n = (t - t_min) / t_span, x_n = (x - x_min) / x_span and predict
/// rho / rho_scale; the FD learner maps that to q / q_scale.
struct LwrScales {
  double t_min = 0.0;
  double t_span = 1.0;
  double x_min = 0.0;
  double x_span = 1.0;
  double rho_scale = 1.0;
  double q_scale = 1.0;

  double speed_scale() const { return q_scale / rho_scale; }
  /// Coefficient of dq_n/dx_n in the residual in network units.
  double flux_coefficient() const { return speed_scale() * t_span / x_span; }
  void validate() const;
};

struct LwrModel {
  Mlp punn;  // (t_n, x_n) -> rho_n
  Mlp fd;    // rho_n -> q_n
  LwrScales scales;
  double rho_floor = 1e-6;  // denominator floor for the speed head
};

struct LwrNodes {
  NodeId rho = kNoNode;
  NodeId q = kNoNode;
  NodeId speed = kNoNode;     // q_n / max(rho_n, floor), network units
  NodeId residual = kNoNode;  // only when derivatives were requested
};

/// Builds the LWR-PINN graph for a batch of normalized (t_n, x_n) rows.
/// The residual is d(rho_n)/d(t_n) + c d(q_n)/d(x_n) with
/// c = flux_coefficient(), the conservation law in network units.
LwrNodes lwr_forward(Tape& tape, const LwrModel& model, const Vec& params,
                     NodeId inputs, bool with_residual);

/// Residual at one physical point (t, x), in network units.
double lwr_residual(const LwrModel& model, const Vec& params, double t, double x);

Matrix normalize_tx(const LwrScales& s, std::span<const double> t,
                    std::span<const double> x);

}  // namespace piml
