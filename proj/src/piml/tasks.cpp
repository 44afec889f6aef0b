#include "piml/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "piml/error.hpp"

namespace piml {


LwrScales fit_lwr_scales(const std::vector<MacroRow>& rows) {
  const MacroBounds b = MacroscopicDataset{rows, {}}.bounds();
  LwrScales s{b.t_min, b.t_max - b.t_min, b.x_min, b.x_max - b.x_min, b.rho_max, b.q_max};
  if (!(s.t_span > 0.0)) s.t_span = 1.0;
  if (!(s.x_span > 0.0)) s.x_span = 1.0;
  if (!(s.rho_scale > 0.0) || !(s.q_scale > 0.0)) {
    fail_validation("training rows need positive density and flow");
  }
  return s;
}

MacroObservations macro_observations(const LwrScales& s, const std::vector<MacroRow>& rows) {
  std::vector<double> t, x;
  MacroObservations obs;
  obs.rho.resize(static_cast<Eigen::Index>(rows.size()));
  obs.speed.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.push_back(rows[i].t);
    x.push_back(rows[i].x);
    obs.rho[static_cast<Eigen::Index>(i)] = rows[i].rho / s.rho_scale;
    obs.speed[static_cast<Eigen::Index>(i)] = rows[i].u / s.speed_scale();
  }
  obs.tx = normalize_tx(s, t, x);
  return obs;
}

Metrics lwr_metrics(const LwrModel& model, const Vec& params, const std::vector<MacroRow>& rows) {
  if (rows.empty()) fail_validation("no evaluation rows");
  const MacroObservations obs = macro_observations(model.scales, rows);
  Tape tape;
  const LwrNodes n = lwr_forward(tape, model, params, tape.constant(obs.tx), false);
  const Matrix& rho_n = tape.value(n.rho);
  const Matrix& speed_n = tape.value(n.speed);
  std::vector<double> rho_hat, u_hat, rho, u;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rho_hat.push_back(rho_n(r, 0) * model.scales.rho_scale);
    u_hat.push_back(speed_n(r, 0) * model.scales.speed_scale());
    rho.push_back(rows[i].rho);
    u.push_back(rows[i].u);
  }
  return {{"err_rho", l2_relative_error(rho_hat, rho)}, {"err_u", l2_relative_error(u_hat, u)}};
}

LwrTask::LwrTask(std::vector<MacroRow> train, std::vector<MacroRow> test, LwrTaskConfig cfg)
    : test_(std::move(test)), cfg_(cfg) {
  if (train.empty()) fail_validation("no training rows");
  if (test_.empty()) fail_validation("no test rows");
  const Mlp punn(cfg_.punn, 0);
  model_ = LwrModel{punn, Mlp(cfg_.fd, punn.num_params()), fit_lwr_scales(train)};
  obs_ = macro_observations(model_.scales, train);
  const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
  aux_.tx = sample_auxiliary(lo, hi, cfg_.auxiliary, cfg_.sample_seed);
}

std::size_t LwrTask::num_params() const {
  return model_.punn.num_params() + model_.fd.num_params();
}

Vec LwrTask::initial_params(std::uint64_t seed) const {
  auto [punn, pp] = build_network(cfg_.punn, seed);
  auto [fd, fp] = build_network(cfg_.fd, seed ^ 0x9e3779b97f4a7c15ULL);
  // Shift each output bias so the mean initial prediction matches the
  // observed mean; keeps q / rho away from the density floor at the start.
  const Matrix rho0 = punn.forward(pp.values, obs_.tx);
  pp.values[pp.values.size() - 1] += obs_.rho.mean() - rho0.mean();
  const Matrix rho_start = punn.forward(pp.values, obs_.tx);
  const Matrix q0 = fd.forward(fp.values, rho_start);
  fp.values[fp.values.size() - 1] +=
      obs_.rho.dot(obs_.speed) / static_cast<double>(obs_.rho.size()) - q0.mean();
  pp.append(fp, "fd.");
  return pp.values;
}

ObjectiveEval LwrTask::evaluate(const Vec& params, bool with_grad) const {
  const auto n = num_params();
  const LossValue d = evaluate_loss(
      [&](Tape& t) { return lwr_data_loss(t, model_, params, obs_); }, n, with_grad);
  const LossValue p = evaluate_loss(
      [&](Tape& t) { return lwr_physics_loss(t, model_, params, aux_); }, n, with_grad);
  return {d.value, p.value, d.grad, p.grad};
}

Metrics LwrTask::metrics(const Vec& params) const { return lwr_metrics(model_, params, test_); }

Metrics cf_metrics(const Mlp& punn, const CfScales& scales, const Vec& params,
                   const std::vector<CfTrajectory>& trajs) {
  if (trajs.empty()) fail_validation("no evaluation trajectories");
  std::vector<std::vector<double>> px, pv, ax, av;
  double collisions = 0.0;
  for (const auto& tr : trajs) {
    const auto model = [&](const CfState& s) {
      const CfState one[1] = {s};
      return punn.forward(params, scales.normalize(one))(0, 0);
    };
    const RolloutResult r =
        rollout(tr.follower_x[0], tr.follower_v[0], tr.leader_x, tr.leader_v, model, tr.dt());
    px.push_back(r.x);
    pv.push_back(r.v);
    ax.push_back(tr.follower_x);
    av.push_back(tr.follower_v);
    if (r.collision) collisions += 1.0;
  }
  return {{"rmse_x", trajectory_rmse(px, ax)},
          {"rmse_v", trajectory_rmse(pv, av)},
          {"collisions", collisions}};
}

CfTask::CfTask(const std::vector<CfTrajectory>& train, std::vector<CfTrajectory> test,
               IdmParams calibrated, CfTaskConfig cfg)
    : test_(std::move(test)), idm_(calibrated), cfg_(cfg), punn_(cfg.punn, 0) {
  idm_.validate();
  if (test_.empty()) fail_validation("no test trajectories");
  if (cfg_.observations == 0 || cfg_.collocation == 0) {
    fail_validation("observation and collocation counts must be positive");
  }
  const std::vector<CalibrationSample> rows = calibration_samples(train);
  if (rows.empty()) fail_validation("no training trajectories");

  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(cfg_.sample_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_obs = std::min(cfg_.observations, idx.size());
  const std::size_t n_coll = std::min(cfg_.collocation, idx.size() - n_obs);
  if (n_coll == 0) fail_validation("too few training rows for disjoint collocation states");
  std::vector<std::size_t> obs_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_obs));
  std::vector<std::size_t> coll_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_obs),
                                    idx.begin() + static_cast<std::ptrdiff_t>(n_obs + n_coll));
  std::sort(obs_idx.begin(), obs_idx.end());
  std::sort(coll_idx.begin(), coll_idx.end());

  std::vector<CfState> all;
  for (const auto& r : rows) all.push_back(r.state);
  scales_ = CfScales::fit(all);

  std::vector<CfState> obs_states;
  obs_.accel.resize(static_cast<Eigen::Index>(n_obs));
  for (std::size_t i = 0; i < n_obs; ++i) {
    obs_states.push_back(rows[obs_idx[i]].state);
    obs_.accel[static_cast<Eigen::Index>(i)] = rows[obs_idx[i]].accel;
  }
  obs_.inputs = scales_.normalize(obs_states);
  for (const auto i : coll_idx) coll_.states.push_back(rows[i].state);
  coll_.inputs = scales_.normalize(coll_.states);
}

Vec CfTask::initial_params(std::uint64_t seed) const {
  return build_network(cfg_.punn, seed).second.values;
}

ObjectiveEval CfTask::evaluate(const Vec& params, bool with_grad) const {
  const auto n = num_params();
  const LossValue d = evaluate_loss(
      [&](Tape& t) { return cf_data_loss(t, punn_, params, obs_); }, n, with_grad);
  const LossValue p = evaluate_loss(
      [&](Tape& t) { return cf_physics_loss(t, punn_, params, idm_, coll_); }, n, with_grad);
  return {d.value, p.value, d.grad, p.grad};
}

Metrics CfTask::metrics(const Vec& params) const {
  return cf_metrics(punn_, scales_, params, test_);
}

}  // namespace piml
