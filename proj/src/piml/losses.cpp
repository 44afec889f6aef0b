#include "piml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "piml/error.hpp"

namespace piml {

namespace {

Matrix column(const Vec& v) { return v; }

NodeId mse(Tape& tape, NodeId pred, const Vec& target) {
  return tape.mean(tape.square(tape.sub(pred, tape.constant(column(target)))));
}

}  // namespace

CfScales CfScales::fit(std::span<const CfState> states) {
  if (states.empty()) fail_validation("cannot fit scales to an empty state set");
  CfScales s;
  double h_max = states.front().h;
  s.h_min = states.front().h;
  s.v_max = 0.0;
  s.dv_abs_max = 0.0;
  for (const auto& st : states) {
    s.v_max = std::max(s.v_max, st.v);
    s.dv_abs_max = std::max(s.dv_abs_max, std::abs(st.dv));
    s.h_min = std::min(s.h_min, st.h);
    h_max = std::max(h_max, st.h);
  }
  s.h_span = h_max - s.h_min;
  if (!(s.v_max > 0.0)) s.v_max = 1.0;
  if (!(s.dv_abs_max > 0.0)) s.dv_abs_max = 1.0;
  if (!(s.h_span > 0.0)) s.h_span = 1.0;
  return s;
}

Matrix CfScales::normalize(std::span<const CfState> states) const {
  Matrix m(static_cast<Eigen::Index>(states.size()), 3);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = states[i].v / v_max;
    m(r, 1) = states[i].dv / dv_abs_max;
    m(r, 2) = (states[i].h - h_min) / h_span;
  }
  return m;
}

void CfScales::validate() const {
  if (!(v_max > 0.0) || !(dv_abs_max > 0.0) || !(h_span > 0.0) || !std::isfinite(h_min)) {
    fail_validation("car-following scales must be positive and finite");
  }
}

void LossWeights::validate() const {
  if (!(data >= 0.0) || !(physics >= 0.0) || !std::isfinite(data) || !std::isfinite(physics)) {
    fail_validation("loss weights must be nonnegative");
  }
}

NodeId lwr_data_loss(Tape& tape, const LwrModel& model, const Vec& params,
                     const MacroObservations& obs) {
  if (obs.tx.rows() == 0) fail_validation("empty observation set");
  if (obs.rho.size() != obs.tx.rows() || obs.speed.size() != obs.tx.rows()) {
    fail_validation("observation columns differ in length");
  }
  const LwrNodes n = lwr_forward(tape, model, params, tape.constant(obs.tx), false);
  return tape.add(mse(tape, n.rho, obs.rho), mse(tape, n.speed, obs.speed));
}

NodeId lwr_physics_loss(Tape& tape, const LwrModel& model, const Vec& params,
                        const MacroAuxiliary& aux) {
  if (aux.tx.rows() == 0) fail_validation("empty auxiliary set");
  const LwrNodes n = lwr_forward(tape, model, params, tape.constant(aux.tx), true);
  return tape.mean(tape.square(n.residual));
}

NodeId cf_data_loss(Tape& tape, const Mlp& punn, const Vec& params,
                    const CfObservations& obs) {
  if (obs.inputs.rows() == 0) fail_validation("empty observation set");
  if (obs.accel.size() != obs.inputs.rows()) fail_validation("observation columns differ in length");
  return mse(tape, punn.forward(tape, params, tape.constant(obs.inputs)), obs.accel);
}

NodeId cf_physics_loss(Tape& tape, const Mlp& punn, const Vec& params,
                       const IdmParams& idm, const CfCollocation& coll) {
  if (coll.inputs.rows() == 0) fail_validation("empty collocation set");
  if (static_cast<Eigen::Index>(coll.states.size()) != coll.inputs.rows()) {
    fail_validation("collocation inputs and states differ in length");
  }
  Vec target(coll.inputs.rows());
  for (std::size_t i = 0; i < coll.states.size(); ++i) {
    target[static_cast<Eigen::Index>(i)] = idm_acceleration(coll.states[i], idm);
  }
  return mse(tape, punn.forward(tape, params, tape.constant(coll.inputs)), target);
}

NodeId scalarized(Tape& tape, const LossWeights& w, NodeId data, NodeId physics) {
  return tape.add(tape.mul(tape.scalar(w.data), data), tape.mul(tape.scalar(w.physics), physics));
}

double scalarized(const LossWeights& w, double data, double physics) {
  return w.data * data + w.physics * physics;
}

LossValue evaluate_loss(const LossBuilder& build, std::size_t num_params, bool with_grad) {
  Tape tape;
  const NodeId out = build(tape);
  LossValue v{tape.scalar_value(out), Vec{}};
  if (!std::isfinite(v.value)) fail_numerical("non-finite loss");
  if (with_grad) {
    v.grad = tape.backward(out, num_params);
    require_finite(v.grad, "loss gradient");
  }
  return v;
}

Matrix sample_auxiliary(std::span<const double> lo, std::span<const double> hi,
                        std::size_t n, std::uint64_t seed) {
  if (lo.size() != hi.size() || lo.empty()) fail_validation("box bounds differ in length");
  if (n == 0) fail_validation("auxiliary set needs at least one point");
  for (std::size_t d = 0; d < lo.size(); ++d) {
    if (!(hi[d] >= lo[d])) fail_validation("box bounds are not ordered");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lo.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index d = 0; d < m.cols(); ++d) {
      const auto k = static_cast<std::size_t>(d);
      m(i, d) = lo[k] + unit(rng) * (hi[k] - lo[k]);
    }
  }
  return m;
}

double l2_relative_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    fail_validation("series must be non-empty and of equal length");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  if (!(den > 0.0)) fail_numerical("relative error against an all-zero series");
  return num / den;
}

double trajectory_rmse(const std::vector<std::vector<double>>& predicted,
                       const std::vector<std::vector<double>>& actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    fail_validation("trajectory sets must be non-empty and of equal size");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k].size() != actual[k].size()) fail_validation("trajectory lengths differ");
    for (std::size_t i = 0; i < actual[k].size(); ++i) {
      const double e = predicted[k][i] - actual[k][i];
      sum += e * e;
    }
    count += actual[k].size();
  }
  if (count == 0) fail_validation("trajectories are empty");
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace piml
