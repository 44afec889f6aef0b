#include <cmath>
#include <limits>

#include "doctest.h"
#include "piml/error.hpp"
#include "piml/tasks.hpp"
#include "piml/train.hpp"

using piml::Method;
using piml::TrainConfig;
using piml::Vec;

namespace {

// Toy task whose initial point is fixed.
class FixedStartTask final : public piml::Task {
 public:
  FixedStartTask(piml::QuadraticToyTask inner, Vec start)
      : inner_(std::move(inner)), start_(std::move(start)) {}
  std::size_t num_params() const override { return inner_.num_params(); }
  Vec initial_params(std::uint64_t) const override { return start_; }
  piml::ObjectiveEval evaluate(const Vec& p, bool g) const override { return inner_.evaluate(p, g); }
  piml::Metrics metrics(const Vec& p) const override { return inner_.metrics(p); }
  std::string primary_metric() const override { return inner_.primary_metric(); }

 private:
  piml::QuadraticToyTask inner_;
  Vec start_;
};

// Reports a NaN data loss from a given epoch on.
class PoisonedTask final : public piml::Task {
 public:
  explicit PoisonedTask(int bad_epoch) : inner_(piml::QuadraticToyTask::random(3, 1)), bad_(bad_epoch) {}
  std::size_t num_params() const override { return 3; }
  Vec initial_params(std::uint64_t s) const override { return inner_.initial_params(s); }
  piml::ObjectiveEval evaluate(const Vec& p, bool g) const override {
    auto ev = inner_.evaluate(p, g);
    if (calls_++ >= bad_) ev.data = std::numeric_limits<double>::quiet_NaN();
    return ev;
  }
  piml::Metrics metrics(const Vec& p) const override { return inner_.metrics(p); }
  std::string primary_metric() const override { return "segment_distance"; }

 private:
  piml::QuadraticToyTask inner_;
  int bad_;
  mutable int calls_ = 0;
};

TrainConfig mgda_config(Method m) {
  TrainConfig cfg;
  cfg.method = m;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 5000;
  cfg.conflict_threshold = 1e-6;
  return cfg;
}

const Method kMgda[] = {Method::tmgd, Method::dcgd_center, Method::dcgd_avg, Method::dcgd_proj};

struct SmallTasks {
  piml::LwrTask lwr;
  piml::CfTask cf;
};

SmallTasks small_tasks() {
  piml::MacroSynthConfig mc;
  mc.sensors = 5;
  mc.horizon = 100.0;
  const auto macro = piml::generate_synthetic_macro(mc);
  const auto ms = piml::split(macro.rows, 0.8, 1);
  piml::LwrTaskConfig lc;
  lc.punn = {2, 1, 2, 6};
  lc.fd = {1, 1, 1, 5};
  lc.auxiliary = 20;

  piml::CfSynthConfig cc;
  cc.count = 3;
  cc.horizon = 10.0;
  cc.noise = 0.05;
  const auto trs = piml::generate_synthetic_cf(cc);
  const auto cs = piml::split(trs, 0.67, 1);
  piml::CfTaskConfig tc;
  tc.punn = {3, 1, 2, 8};
  tc.observations = 30;
  tc.collocation = 30;
  return {piml::LwrTask(ms.train, ms.test, lc), piml::CfTask(cs.train, cs.test, cc.idm, tc)};
}

}  // namespace

TEST_CASE("multi-gradient training on two quadratics ends on the Pareto segment") {
  const auto task = piml::QuadraticToyTask::random(20, 3);
  for (const Method m : kMgda) {
    CAPTURE(piml::to_string(m));
    const auto res = piml::train(task, mgda_config(m));
    const auto metrics = task.metrics(res.params);
    CHECK(metrics.at("segment_distance") <= 1e-3);
    CHECK(metrics.at("min_norm") <= 1e-5);
    CHECK(res.log.stop != piml::StopReason::none);
  }
}

TEST_CASE("starting at one objective's minimizer") {
  const auto toy = piml::QuadraticToyTask::random(5, 8);
  const FixedStartTask task(toy, toy.a());
  for (const Method m : kMgda) {
    CAPTURE(piml::to_string(m));
    const auto res = piml::train(task, mgda_config(m));
    CHECK(res.log.epochs_run == 0);
    CHECK(res.log.stop == piml::StopReason::stationary);
    CHECK(res.params == toy.a());
  }
  TrainConfig cfg;
  cfg.weights = piml::LossWeights{0.75, 0.25};
  cfg.optimizer = piml::OptimizerKind::sgd;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 10;
  const auto res = piml::train(task, cfg);
  CHECK((res.params - toy.a()).norm() > 1e-3);
  CHECK(task.evaluate(res.params, false).data > 0.0);
}

TEST_CASE("each accepted multi-gradient step decreases both losses at small step size") {
  const auto task = piml::QuadraticToyTask::random(10, 4);
  for (const Method m : kMgda) {
    CAPTURE(piml::to_string(m));
    TrainConfig cfg = mgda_config(m);
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 300;
    const auto res = piml::train(task, cfg);
    for (std::size_t i = 1; i < res.log.records.size(); ++i) {
      CHECK(res.log.records[i].loss_data <= res.log.records[i - 1].loss_data + 1e-15);
      CHECK(res.log.records[i].loss_physics <= res.log.records[i - 1].loss_physics + 1e-15);
    }
  }
}

TEST_CASE("scalarized Adam on a quadratic decreases the loss monotonically") {
  const auto task = piml::QuadraticToyTask::random(6, 2);
  TrainConfig cfg;
  cfg.weights = piml::LossWeights{0.3, 0.7};
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 500;
  const auto res = piml::train(task, cfg);
  for (std::size_t i = 1; i < res.log.records.size(); ++i) {
    const auto& r = res.log.records;
    CHECK(0.3 * r[i].loss_data + 0.7 * r[i].loss_physics <=
          0.3 * r[i - 1].loss_data + 0.7 * r[i - 1].loss_physics);
  }
  CHECK(res.log.stop == piml::StopReason::epoch_limit);
  CHECK(res.log.epochs_run == 500);
}

TEST_CASE("zero physics weight ignores the physics objective") {
  const auto a = piml::QuadraticToyTask::random(4, 1);
  const piml::QuadraticToyTask other(a.a(), a.b() * -3.0 + Vec::Ones(4));
  TrainConfig cfg;
  cfg.weights = piml::LossWeights{1.0, 0.0};
  cfg.max_epochs = 200;
  cfg.learning_rate = 0.01;
  CHECK(piml::train(a, cfg).params == piml::train(other, cfg).params);

  piml::CfSynthConfig cc;
  cc.count = 3;
  cc.horizon = 10.0;
  const auto cs = piml::split(piml::generate_synthetic_cf(cc), 0.67, 1);
  piml::CfTaskConfig tc;
  tc.punn = {3, 1, 2, 8};
  tc.observations = 30;
  tc.collocation = 30;
  piml::IdmParams wrong = cc.idm;
  wrong.v0 = 12.0;
  wrong.b = 0.7;
  const piml::CfTask right_task(cs.train, cs.test, cc.idm, tc);
  const piml::CfTask wrong_task(cs.train, cs.test, wrong, tc);
  cfg.max_epochs = 30;
  cfg.learning_rate = 1e-3;
  CHECK(piml::train(right_task, cfg).params == piml::train(wrong_task, cfg).params);
  cfg.weights = piml::LossWeights{1.0, 0.5};
  CHECK(piml::train(right_task, cfg).params != piml::train(wrong_task, cfg).params);
}

TEST_CASE("homogeneity of the scalarized first step under plain gradient descent") {
  auto tasks = small_tasks();
  for (const piml::Task* task : {static_cast<const piml::Task*>(&tasks.lwr),
                                 static_cast<const piml::Task*>(&tasks.cf)}) {
    TrainConfig cfg;
    cfg.optimizer = piml::OptimizerKind::sgd;
    cfg.max_epochs = 1;
    cfg.learning_rate = 1e-2;
    cfg.weights = piml::LossWeights{0.7, 0.3};
    TrainConfig scaled = cfg;
    scaled.learning_rate = cfg.learning_rate / 2.0;
    scaled.weights = piml::LossWeights{1.4, 0.6};
    CHECK(piml::train(*task, cfg).params == piml::train(*task, scaled).params);
  }
}

TEST_CASE("training is bit-reproducible") {
  auto tasks = small_tasks();
  for (const Method m : {Method::scalarized, Method::tmgd, Method::dcgd_center, Method::dcgd_avg,
                         Method::dcgd_proj}) {
    CAPTURE(piml::to_string(m));
    TrainConfig cfg;
    cfg.method = m;
    cfg.max_epochs = 20;
    cfg.optimizer = piml::OptimizerKind::adam;
    if (m == Method::scalarized) cfg.weights = piml::LossWeights{100.0, 500.0};
    for (const piml::Task* task : {static_cast<const piml::Task*>(&tasks.lwr),
                                   static_cast<const piml::Task*>(&tasks.cf)}) {
      const auto a = piml::train(*task, cfg);
      const auto b = piml::train(*task, cfg);
      CHECK(a.log.to_csv() == b.log.to_csv());
      CHECK(a.params == b.params);
      CHECK(a.log.metrics == b.log.metrics);
      for (const auto& [name, value] : a.log.metrics) CHECK(std::isfinite(value));
    }
  }
}

TEST_CASE("run log layout") {
  const auto task = piml::QuadraticToyTask::random(3, 5);
  TrainConfig cfg;
  cfg.weights = piml::LossWeights{};
  cfg.max_epochs = 25;
  cfg.eval_every = 10;
  const auto res = piml::train(task, cfg);
  REQUIRE(res.log.records.size() == 3);
  CHECK(res.log.records[2].epoch == 20);
  const std::string csv = res.log.to_csv();
  CHECK(csv.rfind("epoch,loss_data,loss_physics,grad_norm_data,grad_norm_physics,angle,"
                  "direction_norm\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("NaN losses abort with the epoch") {
  const PoisonedTask task(3);
  TrainConfig cfg;
  cfg.weights = piml::LossWeights{};
  cfg.max_epochs = 10;
  CHECK_THROWS_WITH_AS(piml::train(task, cfg), "epoch 3: non-finite loss", piml::Error);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), piml::Error);  // scalarized needs weights
  cfg.weights = piml::LossWeights{1.0, -1.0};
  CHECK_THROWS_AS(cfg.validate(), piml::Error);
  cfg.weights = piml::LossWeights{1.0, 1.0};
  CHECK_NOTHROW(cfg.validate());
  cfg.method = Method::tmgd;
  CHECK_THROWS_AS(cfg.validate(), piml::Error);  // weights only for scalarized
  cfg.weights.reset();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.resolved_optimizer() == piml::OptimizerKind::sgd);
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), piml::Error);
  CHECK(piml::method_from_string("dcgd_avg") == Method::dcgd_avg);
  CHECK_THROWS_AS(piml::method_from_string("sgd"), piml::Error);
}

TEST_CASE("running mean of squared gradient norms under dual-cone descent") {
  const auto task = piml::QuadraticToyTask::random(8, 6);
  TrainConfig cfg = mgda_config(Method::dcgd_center);
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 400;
  const auto res = piml::train(task, cfg);
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  int increases = 0;
  for (std::size_t t = 0; t < res.log.records.size(); ++t) {
    const auto& r = res.log.records[t];
    sum += r.grad_norm_data * r.grad_norm_data + r.grad_norm_physics * r.grad_norm_physics;
    const double avg = sum / static_cast<double>(t + 1);
    if (t > 20 && avg > prev) ++increases;
    prev = avg;
  }
  WARN(increases == 0);
}

TEST_CASE("scalarization sweep") {
  const auto task = piml::QuadraticToyTask::random(4, 9);
  TrainConfig base;
  base.max_epochs = 50;
  base.learning_rate = 0.01;
  const auto single = piml::sweep_scalarization(task, base, piml::beta_grid(1.0, {2.0}), 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].best);
  TrainConfig one = base;
  one.weights = piml::LossWeights{1.0, 2.0};
  CHECK(single[0].mean.at("segment_distance") ==
        piml::train(task, one).log.metrics.at("segment_distance"));
  CHECK(single[0].stddev.at("segment_distance") == 0.0);

  const auto rows = piml::sweep_scalarization(task, base, piml::convex_grid({0.1, 0.5, 0.9}), 3);
  REQUIRE(rows.size() == 3);
  int best = 0;
  for (const auto& r : rows) {
    best += r.best ? 1 : 0;
    for (const auto& [name, sd] : r.stddev) CHECK(sd >= 0.0);
    CHECK(r.weights.data + r.weights.physics == doctest::Approx(1.0));
  }
  CHECK(best == 1);
  const std::string csv = piml::sweep_to_csv(rows);
  CHECK(csv.rfind("alpha,beta,loss_data_mean,loss_data_std", 0) == 0);
}
