#include "piml/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "piml/error.hpp"

namespace piml {

void IdmParams::validate() const {
  for (const double p : to_array()) {
    if (!(p > 0.0) || !std::isfinite(p)) fail_validation("IDM parameters must be positive");
  }
}

std::array<double, IdmParams::kCount> IdmParams::to_array() const {
  return {v0, T0, s0, a_max, b, delta};
}

IdmParams IdmParams::from_array(const std::array<double, kCount>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5]};
}

double idm_acceleration(const CfState& state, const IdmParams& p) {
  if (!(state.h > 0.0)) fail_validation("nonpositive spacing");
  const double s_star =
      p.s0 + state.v * p.T0 + state.v * state.dv / (2.0 * std::sqrt(p.a_max * p.b));
  const double ratio = s_star / state.h;
  return p.a_max * (1.0 - std::pow(state.v / p.v0, p.delta) - ratio * ratio);
}

RolloutResult rollout(double x0, double v0, std::span<const double> leader_x,
                      std::span<const double> leader_v, const AccelModel& accel,
                      double dt) {
  if (!(dt > 0.0)) fail_validation("rollout step must be positive");
  if (leader_x.empty() || leader_x.size() != leader_v.size()) {
    fail_validation("leader trajectory must be non-empty with matching speed samples");
  }
  RolloutResult out;
  out.x.reserve(leader_x.size());
  out.v.reserve(leader_x.size());
  double x = x0;
  double v = v0;
  out.x.push_back(x);
  out.v.push_back(v);
  for (std::size_t k = 0; k + 1 < leader_x.size(); ++k) {
    double h = leader_x[k] - x;
    if (!(h > 0.0)) {
      out.collision = true;
      h = kCollisionSpacing;
    }
    const double a = accel(CfState{v, v - leader_v[k], h});
    if (!std::isfinite(a)) fail_numerical("non-finite acceleration during rollout");
    v = std::max(0.0, v + a * dt);
    x = x + v * dt;
    out.x.push_back(x);
    out.v.push_back(v);
  }
  return out;
}

void GaConfig::validate() const {
  if (population < 2 || population % 2 != 0) fail_validation("GA population must be even and >= 2");
  if (generations < 1) fail_validation("GA generations must be >= 1");
  if (crossover_rate < 0.0 || crossover_rate > 1.0) fail_validation("crossover rate outside [0,1]");
  if (mutation_rate < 0.0 || mutation_rate > 1.0) fail_validation("mutation rate outside [0,1]");
  if (!(mutation_scale >= 0.0) || !(final_mutation_ratio > 0.0)) {
    fail_validation("mutation scale must be nonnegative");
  }
  for (const auto& b : bounds) {
    if (!(b.lo > 0.0) || !(b.hi >= b.lo) || !std::isfinite(b.hi)) {
      fail_validation("GA bounds must be finite, positive and ordered");
    }
  }
  if (!(fixed_delta > 0.0)) fail_validation("fixed delta must be positive");
}

double idm_fitness(const IdmParams& p, std::span<const CalibrationSample> samples) {
  if (samples.empty()) fail_validation("no calibration samples");
  double sum = 0.0;
  for (const auto& s : samples) {
    const double e = idm_acceleration(s.state, p) - s.accel;
    sum += e * e;
  }
  const double mse = sum / static_cast<double>(samples.size());
  return std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
}

namespace {

using Genome = std::array<double, IdmParams::kCount>;

struct Individual {
  Genome genes{};
  double fitness = std::numeric_limits<double>::infinity();
};

struct AccelResiduals {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::span<const CalibrationSample> samples;
  Genome base;
  int free;

  int inputs() const { return free; }
  int values() const { return static_cast<int>(samples.size()); }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    Genome g = base;
    for (int i = 0; i < free; ++i) g[static_cast<std::size_t>(i)] = x[i];
    const IdmParams p = IdmParams::from_array(g);
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const double e = idm_acceleration(samples[k].state, p) - samples[k].accel;
      r[static_cast<Eigen::Index>(k)] = std::isfinite(e) ? e : 1e6;
    }
    return 0;
  }
};

Genome levenberg_marquardt(std::span<const CalibrationSample> samples, const Genome& start,
                           std::size_t free) {
  AccelResiduals f{samples, start, static_cast<int>(free)};
  Eigen::NumericalDiff<AccelResiduals, Eigen::Central> df(f);
  Eigen::LevenbergMarquardt<decltype(df)> lm(df);
  Eigen::VectorXd x(static_cast<Eigen::Index>(free));
  for (std::size_t i = 0; i < free; ++i) x[static_cast<Eigen::Index>(i)] = start[i];
  lm.parameters.maxfev = 2000;
  lm.minimize(x);
  Genome out = start;
  for (std::size_t i = 0; i < free; ++i) out[i] = x[static_cast<Eigen::Index>(i)];
  return out;
}

}  // namespace

CalibrationResult calibrate_idm(std::span<const CalibrationSample> samples,
                                const GaConfig& cfg) {
  cfg.validate();
  if (samples.empty()) fail_validation("no calibration samples");

  const std::size_t genes = cfg.calibrate_delta ? IdmParams::kCount : IdmParams::kCount - 1;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto to_params = [&](const Genome& g) {
    IdmParams p = IdmParams::from_array(g);
    if (!cfg.calibrate_delta) p.delta = cfg.fixed_delta;
    return p;
  };
  const auto clip = [&](Genome& g) {
    for (std::size_t i = 0; i < genes; ++i) {
      g[i] = std::clamp(g[i], cfg.bounds[i].lo, cfg.bounds[i].hi);
    }
  };
  const auto evaluate = [&](Individual& ind) {
    ind.fitness = idm_fitness(to_params(ind.genes), samples);
  };

  const auto pop_size = static_cast<std::size_t>(cfg.population);
  std::vector<Individual> pop(pop_size);
  for (auto& ind : pop) {
    for (std::size_t i = 0; i < genes; ++i) {
      ind.genes[i] = cfg.bounds[i].lo + unit(rng) * (cfg.bounds[i].hi - cfg.bounds[i].lo);
    }
    ind.genes[IdmParams::kCount - 1] =
        cfg.calibrate_delta ? ind.genes[IdmParams::kCount - 1] : cfg.fixed_delta;
    evaluate(ind);
  }

  CalibrationResult result;
  const auto best_of = [](const std::vector<Individual>& p) {
    return *std::min_element(p.begin(), p.end(), [](const auto& a, const auto& b) {
      return a.fitness < b.fitness;
    });
  };
  const auto record = [&](int gen) {
    double sum = 0.0;
    std::size_t finite = 0;
    for (const auto& ind : pop) {
      if (std::isfinite(ind.fitness)) {
        sum += ind.fitness;
        ++finite;
      }
    }
    result.log.push_back({gen, best_of(pop).fitness,
                          finite ? sum / static_cast<double>(finite)
                                 : std::numeric_limits<double>::infinity()});
  };
  record(0);

  std::uniform_int_distribution<std::size_t> pick(0, pop_size - 1);
  const auto tournament = [&]() -> const Individual& {
    const Individual& a = pop[pick(rng)];
    const Individual& b = pop[pick(rng)];
    return b.fitness < a.fitness ? b : a;
  };

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    const double progress =
        cfg.generations > 1 ? static_cast<double>(gen - 1) / (cfg.generations - 1) : 1.0;
    const double sigma = cfg.mutation_scale * std::pow(cfg.final_mutation_ratio, progress);

    std::vector<Individual> next;
    next.reserve(pop_size);
    next.push_back(best_of(pop));
    while (next.size() < pop_size) {
      Individual c1 = tournament();
      Individual c2 = tournament();
      if (unit(rng) < cfg.crossover_rate) {
        for (std::size_t i = 0; i < genes; ++i) {
          const double lo = std::min(c1.genes[i], c2.genes[i]);
          const double hi = std::max(c1.genes[i], c2.genes[i]);
          const double span = hi - lo;
          const double a = lo - cfg.blend_alpha * span;
          const double w = (1.0 + 2.0 * cfg.blend_alpha) * span;
          c1.genes[i] = a + unit(rng) * w;
          c2.genes[i] = a + unit(rng) * w;
        }
      }
      for (Individual* c : {&c1, &c2}) {
        for (std::size_t i = 0; i < genes; ++i) {
          if (unit(rng) < cfg.mutation_rate) {
            c->genes[i] += gauss(rng) * sigma * (cfg.bounds[i].hi - cfg.bounds[i].lo);
          }
        }
        clip(c->genes);
        evaluate(*c);
        if (next.size() < pop_size) next.push_back(*c);
      }
    }
    pop = std::move(next);
    record(gen);
  }

  Individual best = best_of(pop);
  if (cfg.polish && samples.size() >= genes) {
    Individual refined{levenberg_marquardt(samples, best.genes, genes)};
    clip(refined.genes);
    evaluate(refined);
    if (refined.fitness < best.fitness) best = refined;
  }
  result.params = to_params(best.genes);
  result.fitness = best.fitness;
  return result;
}

void LwrScales::validate() const {
  if (!(t_span > 0.0) || !(x_span > 0.0) || !(rho_scale > 0.0) || !(q_scale > 0.0)) {
    fail_validation("LWR scales must be positive");
  }
}

LwrNodes lwr_forward(Tape& tape, const LwrModel& model, const Vec& params,
                     NodeId inputs, bool with_residual) {
  LwrNodes out;
  if (!with_residual) {
    out.rho = model.punn.forward(tape, params, inputs);
    out.q = model.fd.forward(tape, params, out.rho);
  } else {
    // Tangent 0 is d/dt_n, tangent 1 is d/dx_n.
    const DualNode rho = model.punn.forward(tape, params, seed_inputs(tape, inputs, 2));
    const DualNode q = model.fd.forward(
        tape, params, DualNode{.value = rho.value, .tangents = {rho.tangents[1]}});
    out.rho = rho.value;
    out.q = q.value;
    const NodeId flux =
        tape.mul(tape.scalar(model.scales.flux_coefficient()), q.tangents[0]);
    out.residual = tape.add(rho.tangents[0], flux);
  }
  out.speed = tape.div(out.q, out.rho, model.rho_floor);
  return out;
}

double lwr_residual(const LwrModel& model, const Vec& params, double t, double x) {
  const std::array<double, 1> ts{t};
  const std::array<double, 1> xs{x};
  Tape tape;
  const NodeId in = tape.constant(normalize_tx(model.scales, ts, xs));
  const LwrNodes nodes = lwr_forward(tape, model, params, in, true);
  const double r = tape.value(nodes.residual)(0, 0);
  if (!std::isfinite(r)) fail_numerical("non-finite LWR residual");
  return r;
}

Matrix normalize_tx(const LwrScales& s, std::span<const double> t,
                    std::span<const double> x) {
  if (t.size() != x.size()) fail_validation("t and x columns differ in length");
  Matrix m(static_cast<Eigen::Index>(t.size()), 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = (t[i] - s.t_min) / s.t_span;
    m(static_cast<Eigen::Index>(i), 1) = (x[i] - s.x_min) / s.x_span;
  }
  return m;
}

}  // namespace piml
