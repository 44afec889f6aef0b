#include "piml/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "piml/data.hpp"
#include "piml/error.hpp"

namespace piml {

QuadraticToyTask::QuadraticToyTask(Vec a, Vec b, double init_scale)
    : a_(std::move(a)), b_(std::move(b)), init_scale_(init_scale) {
  if (a_.size() == 0 || a_.size() != b_.size()) fail_validation("toy anchors differ in dimension");
}

QuadraticToyTask QuadraticToyTask::random(Eigen::Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec a(dim), b(dim);
  for (Eigen::Index i = 0; i < dim; ++i) a[i] = n(rng);
  for (Eigen::Index i = 0; i < dim; ++i) b[i] = n(rng);
  return {a, b};
}

Vec QuadraticToyTask::initial_params(std::uint64_t seed) const {
  // Separate stream from random(), so equal seeds do not start on a.
  std::mt19937_64 rng(seed ^ 0xa0761d6478bd642fULL);
  std::normal_distribution<double> n(0.0, init_scale_);
  Vec theta(a_.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = n(rng);
  return theta;
}

ObjectiveEval QuadraticToyTask::evaluate(const Vec& params, bool with_grad) const {
  ObjectiveEval ev;
  ev.data = (params - a_).squaredNorm();
  ev.physics = (params - b_).squaredNorm();
  if (with_grad) {
    ev.g_data = 2.0 * (params - a_);
    ev.g_physics = 2.0 * (params - b_);
  }
  return ev;
}

double QuadraticToyTask::segment_distance(const Vec& theta) const {
  const Vec ab = b_ - a_;
  const double len_sq = ab.squaredNorm();
  const double t = len_sq > 0.0 ? std::clamp((theta - a_).dot(ab) / len_sq, 0.0, 1.0) : 0.0;
  return (theta - (a_ + t * ab)).norm();
}

Metrics QuadraticToyTask::metrics(const Vec& params) const {
  const ObjectiveEval ev = evaluate(params, true);
  const GradientSet gs({ev.g_data, ev.g_physics});
  return {{"segment_distance", segment_distance(params)},
          {"min_norm", frank_wolfe_min_norm(gs).point.norm()},
          {"loss_data", ev.data},
          {"loss_physics", ev.physics}};
}

const char* to_string(Method m) {
  switch (m) {
    case Method::scalarized: return "scalarized";
    case Method::tmgd: return "tmgd";
    case Method::dcgd_center: return "dcgd_center";
    case Method::dcgd_avg: return "dcgd_avg";
    case Method::dcgd_proj: return "dcgd_proj";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::scalarized, Method::tmgd, Method::dcgd_center, Method::dcgd_avg,
                   Method::dcgd_proj}) {
    if (s == to_string(m)) return m;
  }
  fail_validation("unknown method '" + s + "'");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  fail_validation("unknown optimizer '" + s + "'");
}

bool is_mgda(Method m) { return m != Method::scalarized; }

OptimizerKind TrainConfig::resolved_optimizer() const {
  if (optimizer) return *optimizer;
  return is_mgda(method) ? OptimizerKind::sgd : OptimizerKind::adam;
}

DcgdConfig TrainConfig::dcgd() const {
  return {learning_rate, max_epochs, gradient_threshold, conflict_threshold};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail_validation("learning rate must be positive");
  }
  if (max_epochs < 0) fail_validation("max_epochs must be nonnegative");
  if (eval_every < 1) fail_validation("eval_every must be >= 1");
  if (method == Method::scalarized) {
    if (!weights) fail_validation("scalarized training needs loss weights");
    weights->validate();
  } else {
    if (weights) fail_validation(std::string("loss weights do not apply to ") + to_string(method));
    dcgd().validate();
  }
}

std::string RunLog::to_csv() const {
  std::string out =
      "epoch,loss_data,loss_physics,grad_norm_data,grad_norm_physics,angle,direction_norm\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + format_double(r.loss_data) + "," +
           format_double(r.loss_physics) + "," + format_double(r.grad_norm_data) + "," +
           format_double(r.grad_norm_physics) + "," + format_double(r.angle) + "," +
           format_double(r.direction_norm) + "\n";
  }
  return out;
}

namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, AdamParams adam, Eigen::Index n)
      : kind_(kind), lr_(lr), adam_(adam) {
    if (kind_ == OptimizerKind::adam) {
      m_ = Vec::Zero(n);
      v_ = Vec::Zero(n);
    }
  }

  void step(Vec& theta, const Vec& direction) {
    if (kind_ == OptimizerKind::sgd) {
      theta -= lr_ * direction;
      return;
    }
    ++t_;
    m_ = adam_.beta1 * m_ + (1.0 - adam_.beta1) * direction;
    v_ = adam_.beta2 * v_ + (1.0 - adam_.beta2) * direction.cwiseAbs2();
    const double c1 = 1.0 - std::pow(adam_.beta1, t_);
    const double c2 = 1.0 - std::pow(adam_.beta2, t_);
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + adam_.eps);
  }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamParams adam_;
  Vec m_;
  Vec v_;
  int t_ = 0;
};

ObjectiveEval evaluate_at(const Task& task, const Vec& theta, int epoch) {
  ObjectiveEval ev;
  try {
    ev = task.evaluate(theta, true);
  } catch (const Error& e) {
    throw Error(e.kind(), "epoch " + std::to_string(epoch) + ": " + e.what());
  }
  if (!std::isfinite(ev.data) || !std::isfinite(ev.physics)) {
    fail_numerical("epoch " + std::to_string(epoch) + ": non-finite loss");
  }
  if (!ev.g_data.allFinite() || !ev.g_physics.allFinite()) {
    fail_numerical("epoch " + std::to_string(epoch) + ": non-finite gradient");
  }
  return ev;
}

double safe_angle(const Vec& a, const Vec& b) {
  if (!(a.norm() > 0.0) || !(b.norm() > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return angle_between(a, b);
}

EpochRecord make_record(int epoch, const ObjectiveEval& ev, double angle, const Vec& direction) {
  return {epoch,          ev.data,         ev.physics,          ev.g_data.norm(),
          ev.g_physics.norm(), angle, direction.norm()};
}

void check_params(const Vec& theta, int epoch) {
  if (!theta.allFinite()) {
    fail_numerical("epoch " + std::to_string(epoch) + ": non-finite parameters after update");
  }
}

}  // namespace

TrainResult train_scalarized(const Task& task, const TrainConfig& cfg) {
  if (cfg.method != Method::scalarized) fail_validation("train_scalarized needs method scalarized");
  cfg.validate();
  const LossWeights w = *cfg.weights;
  TrainResult res{task.initial_params(cfg.seed), {}};
  Optimizer opt(cfg.resolved_optimizer(), cfg.learning_rate, cfg.adam, res.params.size());
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const ObjectiveEval ev = evaluate_at(task, res.params, epoch);
    const Vec direction = w.data * ev.g_data + w.physics * ev.g_physics;
    if (epoch % cfg.eval_every == 0) {
      res.log.records.push_back(
          make_record(epoch, ev, safe_angle(ev.g_data, ev.g_physics), direction));
    }
    opt.step(res.params, direction);
    check_params(res.params, epoch);
    ++res.log.epochs_run;
  }
  res.log.stop = StopReason::epoch_limit;
  res.log.metrics = task.metrics(res.params);
  return res;
}

TrainResult train_mgda(const Task& task, const TrainConfig& cfg) {
  if (!is_mgda(cfg.method)) fail_validation("train_mgda needs a multi-gradient method");
  cfg.validate();
  const DcgdConfig dcgd = cfg.dcgd();
  TrainResult res{task.initial_params(cfg.seed), {}};
  Optimizer opt(cfg.resolved_optimizer(), cfg.learning_rate, cfg.adam, res.params.size());
  res.log.stop = StopReason::epoch_limit;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const ObjectiveEval ev = evaluate_at(task, res.params, epoch);
    const GradientSet grads({ev.g_data, ev.g_physics}, {"data", "physics"});
    CombineOutcome out;
    switch (cfg.method) {
      case Method::tmgd: out = tmgd_combine(grads); break;
      case Method::dcgd_center: out = dcgd_center(grads, dcgd); break;
      case Method::dcgd_avg: out = dcgd_average(grads, dcgd); break;
      case Method::dcgd_proj: out = dcgd_projection(grads, dcgd); break;
      case Method::scalarized: break;
    }
    const bool stop = out.stop != StopReason::none;
    if (epoch % cfg.eval_every == 0 || stop) {
      res.log.records.push_back(
          make_record(epoch, ev, safe_angle(ev.g_data, ev.g_physics), out.direction));
    }
    if (stop) {
      res.log.stop = out.stop;
      break;
    }
    for (const Vec& g : grads.grads) {
      const double tol = 1e-8 + 1e-10 * out.direction.norm() * g.norm();
      if (out.direction.dot(g) < -tol) {
        fail_numerical("epoch " + std::to_string(epoch) +
                       ": combined direction left the dual cone");
      }
    }
    opt.step(res.params, out.direction);
    check_params(res.params, epoch);
    ++res.log.epochs_run;
  }
  res.log.metrics = task.metrics(res.params);
  return res;
}

TrainResult train(const Task& task, const TrainConfig& cfg) {
  return is_mgda(cfg.method) ? train_mgda(task, cfg) : train_scalarized(task, cfg);
}

std::vector<LossWeights> beta_grid(double alpha, const std::vector<double>& betas) {
  std::vector<LossWeights> out;
  for (const double b : betas) out.push_back({alpha, b});
  return out;
}

std::vector<LossWeights> convex_grid(const std::vector<double>& alphas) {
  std::vector<LossWeights> out;
  for (const double a : alphas) out.push_back({a, 1.0 - a});
  return out;
}

std::vector<SweepRow> sweep_scalarization(const Task& task, const TrainConfig& base,
                                          const std::vector<LossWeights>& grid, int seeds) {
  if (grid.empty()) fail_validation("empty sweep grid");
  if (seeds < 1) fail_validation("sweep needs at least one seed");
  std::vector<SweepRow> rows;
  const std::string key = task.primary_metric();
  for (const auto& w : grid) {
    SweepRow row{w, {}, {}, false};
    std::map<std::string, std::vector<double>> samples;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig cfg = base;
      cfg.method = Method::scalarized;
      cfg.weights = w;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      for (const auto& [name, value] : train_scalarized(task, cfg).log.metrics) {
        samples[name].push_back(value);
      }
    }
    for (const auto& [name, xs] : samples) {
      double mean = 0.0;
      for (const double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (const double x : xs) var += (x - mean) * (x - mean);
      row.mean[name] = mean;
      row.stddev[name] = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    }
    rows.push_back(std::move(row));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].mean.at(key) < rows[best].mean.at(key)) best = i;
  }
  rows[best].best = true;
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  if (rows.empty()) return "";
  std::string out = "alpha,beta";
  for (const auto& [name, value] : rows.front().mean) out += "," + name + "_mean," + name + "_std";
  out += ",best\n";
  for (const auto& r : rows) {
    out += format_double(r.weights.data) + "," + format_double(r.weights.physics);
    for (const auto& [name, value] : r.mean) {
      out += "," + format_double(value) + "," + format_double(r.stddev.at(name));
    }
    out += r.best ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace piml
