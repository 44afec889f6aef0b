#pragma once

#include <vector>

#include "piml/data.hpp"
#include "piml/train.hpp"

namespace piml {

struct LwrTaskConfig {
  MlpSpec punn = kLwrPunnSpec;
  MlpSpec fd = kFdLearnerSpec;
  std::size_t auxiliary = 300;
  std::uint64_t sample_seed = 1;
};

/// Scales fitted to training rows: min-max inputs, density and flow divided
/// by their maxima.
LwrScales fit_lwr_scales(const std::vector<MacroRow>& rows);
MacroObservations macro_observations(const LwrScales& s, const std::vector<MacroRow>& rows);

/// Err(rho_hat, rho) and Err(u_hat, u) on the rows, physical units.
Metrics lwr_metrics(const LwrModel& model, const Vec& params, const std::vector<MacroRow>& rows);

/// LWR-PINN: density network plus FD learner. Data objective over the
/// training rows, physics objective over uniformly sampled auxiliary points.
class LwrTask final : public Task {
 public:
  LwrTask(std::vector<MacroRow> train, std::vector<MacroRow> test, LwrTaskConfig cfg = {});

  std::size_t num_params() const override;
  Vec initial_params(std::uint64_t seed) const override;
  ObjectiveEval evaluate(const Vec& params, bool with_grad) const override;
  Metrics metrics(const Vec& params) const override;
  std::string primary_metric() const override { return "err_u"; }

  const LwrModel& model() const { return model_; }

 private:
  std::vector<MacroRow> test_;
  LwrTaskConfig cfg_;
  LwrModel model_;
  MacroObservations obs_;
  MacroAuxiliary aux_;
};

struct CfTaskConfig {
  MlpSpec punn = kCfPunnSpec;
  std::size_t observations = 400;
  std::size_t collocation = 400;
  std::uint64_t sample_seed = 1;
};

/// Rolls every trajectory out with the network as the acceleration model.
Metrics cf_metrics(const Mlp& punn, const CfScales& scales, const Vec& params,
                   const std::vector<CfTrajectory>& trajs);

/// Prediction-only physics-informed car-following: the network maps a
/// normalized state to an acceleration. Observations and collocation states
/// are disjoint random draws from the training trajectories.
class CfTask final : public Task {
 public:
  CfTask(const std::vector<CfTrajectory>& train, std::vector<CfTrajectory> test,
         IdmParams calibrated, CfTaskConfig cfg = {});

  std::size_t num_params() const override { return punn_.num_params(); }
  Vec initial_params(std::uint64_t seed) const override;
  ObjectiveEval evaluate(const Vec& params, bool with_grad) const override;
  Metrics metrics(const Vec& params) const override;
  std::string primary_metric() const override { return "rmse_x"; }

  const Mlp& punn() const { return punn_; }
  const CfScales& scales() const { return scales_; }
  const IdmParams& idm() const { return idm_; }

 private:
  std::vector<CfTrajectory> test_;
  IdmParams idm_;
  CfTaskConfig cfg_;
  Mlp punn_;
  CfScales scales_;
  CfObservations obs_;
  CfCollocation coll_;
};

}  // namespace piml
