#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "piml/losses.hpp"
#include "piml/moo.hpp"

namespace piml {

/// Both objectives of a bi-objective task at one parameter vector.
struct ObjectiveEval {
  double data = 0.0;
  double physics = 0.0;
  Vec g_data;     // empty unless gradients were requested
  Vec g_physics;
};

using Metrics = std::map<std::string, double>;

class Task {
 public:
  virtual ~Task() = default;
  virtual std::size_t num_params() const = 0;
  virtual Vec initial_params(std::uint64_t seed) const = 0;
  virtual ObjectiveEval evaluate(const Vec& params, bool with_grad) const = 0;
  /// Evaluation metrics in physical units.
  virtual Metrics metrics(const Vec& params) const = 0;
  /// Metric used to rank sweep rows (lower is better).
  virtual std::string primary_metric() const = 0;
};

/// L_data = |theta - a|^2, L_physics = |theta - b|^2. The Pareto set is
/// the segment [a, b].
class QuadraticToyTask final : public Task {
 public:
  QuadraticToyTask(Vec a, Vec b, double init_scale = 1.0);
  /// a and b drawn from N(0, I) in `dim` dimensions.
  static QuadraticToyTask random(Eigen::Index dim, std::uint64_t seed);

  std::size_t num_params() const override { return static_cast<std::size_t>(a_.size()); }
  Vec initial_params(std::uint64_t seed) const override;
  ObjectiveEval evaluate(const Vec& params, bool with_grad) const override;
  Metrics metrics(const Vec& params) const override;
  std::string primary_metric() const override { return "segment_distance"; }

  const Vec& a() const { return a_; }
  const Vec& b() const { return b_; }
  double segment_distance(const Vec& theta) const;

 private:
  Vec a_;
  Vec b_;
  double init_scale_;
};

enum class Method { scalarized, tmgd, dcgd_center, dcgd_avg, dcgd_proj };
enum class OptimizerKind { sgd, adam };

const char* to_string(Method m);
Method method_from_string(const std::string& s);
const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);
bool is_mgda(Method m);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Method method = Method::scalarized;
  double learning_rate = 1e-3;
  int max_epochs = 20000;
  std::uint64_t seed = 1;
  std::optional<LossWeights> weights;  // scalarized only
  double gradient_threshold = 1e-8;    // dcgd_* stop rule
  double conflict_threshold = 1e-3;    // dcgd_* stop rule
  int eval_every = 1;
  /// Defaults to Adam for the scalarized baseline and plain gradient steps
  /// for the multi-gradient methods.
  std::optional<OptimizerKind> optimizer;
  AdamParams adam;

  OptimizerKind resolved_optimizer() const;
  DcgdConfig dcgd() const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss_data = 0.0;
  double loss_physics = 0.0;
  double grad_norm_data = 0.0;
  double grad_norm_physics = 0.0;
  double angle = 0.0;  // NaN when a gradient is zero
  double direction_norm = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> records;
  StopReason stop = StopReason::none;
  int epochs_run = 0;  // parameter updates applied
  Metrics metrics;

  std::string to_csv() const;
};

struct TrainResult {
  Vec params;
  RunLog log;
};

/// Minimizes w.data L_data + w.physics L_physics.
TrainResult train_scalarized(const Task& task, const TrainConfig& cfg);
/// Combines the two objective gradients each epoch (TMGD or a dual-cone
/// variant) and steps along the result until a stop rule fires.
TrainResult train_mgda(const Task& task, const TrainConfig& cfg);
TrainResult train(const Task& task, const TrainConfig& cfg);

struct SweepRow {
  LossWeights weights;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;  // sample standard deviation, 0 for one seed
  bool best = false;
};

/// Trains the scalarized baseline for each weight pair over `seeds`
/// consecutive seeds starting at base.seed, and marks the row with the
/// lowest mean primary metric.
std::vector<SweepRow> sweep_scalarization(const Task& task, const TrainConfig& base,
                                          const std::vector<LossWeights>& grid, int seeds);

/// (alpha, beta) for each beta with alpha fixed.
std::vector<LossWeights> beta_grid(double alpha, const std::vector<double>& betas);
/// (alpha, 1 - alpha) for each alpha.
std::vector<LossWeights> convex_grid(const std::vector<double>& alphas);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace piml
