#include <cmath>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "piml/error.hpp"
#include "piml/losses.hpp"

using piml::Matrix;
using piml::Tape;
using piml::Vec;

namespace {

double value_of(const piml::LossBuilder& b) { return piml::evaluate_loss(b, 0, false).value; }

// Network with every weight zero and output bias c: predicts c everywhere.
std::pair<piml::Mlp, Vec> constant_net(piml::MlpSpec spec, double c) {
  auto [net, p] = piml::build_network(spec, 1);
  p.values.setZero();
  p.values[p.values.size() - 1] = c;
  return {net, p.values};
}

piml::LwrModel tiny_lwr(Vec& params, std::uint64_t seed) {
  auto [punn, pp] = piml::build_network({2, 1, 2, 4}, seed);
  auto [fd, fp] = piml::build_network({1, 1, 1, 4}, seed + 7);
  const std::size_t base = pp.append(fp, "fd.");
  params = pp.values;
  return {punn, fd.rebased(base), piml::LwrScales{0.0, 1.0, 0.0, 1.0, 1.0, 1.0}};
}

}  // namespace

TEST_CASE("lwr_data_loss examples") {
  // rho = x_n through a linear PUNN, identity FD learner: speed = 1
  const piml::LwrModel m{piml::Mlp({2, 1, 0, 1}, 0), piml::Mlp({1, 1, 0, 1}, 3), {}};
  const Vec p{{0.0, 1.0, 0.0, 1.0, 0.0}};
  SUBCASE("perfect predictor") {
    const piml::MacroObservations obs{Matrix{{0.1, 0.5}, {0.7, 0.2}}, Vec{{0.5, 0.2}},
                                      Vec{{1.0, 1.0}}};
    CHECK(value_of([&](Tape& t) { return piml::lwr_data_loss(t, m, p, obs); }) == 0.0);
  }
  SUBCASE("constant-zero density predictor") {
    const piml::LwrModel zero{piml::Mlp({2, 1, 0, 1}, 0), piml::Mlp({1, 1, 0, 1}, 3), {}};
    const Vec pz{{0.0, 0.0, 0.0, 0.0, 0.0}};
    const piml::MacroObservations obs{Matrix{{0.1, 0.5}, {0.7, 0.2}, {0.3, 0.3}},
                                      Vec{{0.5, 0.2, 0.4}}, Vec{{0.0, 0.0, 0.0}}};
    const double m_sq = (0.25 + 0.04 + 0.16) / 3.0;
    CHECK(value_of([&](Tape& t) { return piml::lwr_data_loss(t, zero, pz, obs); }) ==
          doctest::Approx(m_sq).epsilon(1e-14));
  }
  SUBCASE("three-row hand sum") {
    const piml::MacroObservations obs{Matrix{{0.0, 0.5}, {0.0, 0.25}, {0.0, 1.0}},
                                      Vec{{0.4, 0.25, 0.5}}, Vec{{1.5, 0.5, 1.0}}};
    // density errors 0.1, 0, 0.5; speed errors -0.5, 0.5, 0
    const double hand = (0.01 + 0.0 + 0.25) / 3.0 + (0.25 + 0.25 + 0.0) / 3.0;
    CHECK(std::abs(value_of([&](Tape& t) { return piml::lwr_data_loss(t, m, p, obs); }) - hand) <=
          1e-12);
  }
  SUBCASE("empty set") {
    const piml::MacroObservations obs{Matrix(0, 2), Vec(0), Vec(0)};
    CHECK_THROWS_AS(value_of([&](Tape& t) { return piml::lwr_data_loss(t, m, p, obs); }),
                    piml::Error);
  }
}

TEST_CASE("lwr_physics_loss examples") {
  SUBCASE("constant density net") {
    Vec p;
    const auto m = tiny_lwr(p, 3);
    p.head(static_cast<Eigen::Index>(m.punn.num_params() - 1)).setZero();
    const piml::MacroAuxiliary aux{Matrix{{0.2, 0.3}, {0.9, 0.1}}};
    CHECK(value_of([&](Tape& t) { return piml::lwr_physics_loss(t, m, p, aux); }) == 0.0);
  }
  SUBCASE("two-point hand case") {
    // rho_n = 2 t_n + x_n, q_n = 3 rho_n, c = 1: residual = 2 + 3 everywhere
    const piml::LwrModel m{piml::Mlp({2, 1, 0, 1}, 0), piml::Mlp({1, 1, 0, 1}, 3), {}};
    const Vec p{{2.0, 1.0, 0.0, 3.0, 0.0}};
    const piml::MacroAuxiliary aux{Matrix{{0.2, 0.3}, {0.9, 0.1}}};
    CHECK(value_of([&](Tape& t) { return piml::lwr_physics_loss(t, m, p, aux); }) ==
          doctest::Approx(25.0));
  }
  SUBCASE("nonnegative on random nets") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      Vec p;
      const auto m = tiny_lwr(p, s);
      const piml::MacroAuxiliary aux{piml::sample_auxiliary(std::vector{0.0, 0.0},
                                                            std::vector{1.0, 1.0}, 8, s)};
      CHECK(value_of([&](Tape& t) { return piml::lwr_physics_loss(t, m, p, aux); }) >= 0.0);
    }
  }
}

TEST_CASE("car-following losses") {
  const piml::IdmParams idm{30.0, 1.5, 2.0, 1.0, 2.0, 4.0};
  const piml::CfState s{10.0, 0.0, 20.0};
  SUBCASE("matched single collocation point") {
    const double a = piml::idm_acceleration(s, idm);
    auto [net, p] = constant_net({3, 1, 1, 3}, a);
    const piml::CfCollocation coll{Matrix{{0.3, 0.0, 0.4}}, {s}};
    CHECK(value_of([&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, coll); }) ==
          doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("zero prediction against the worked IDM example") {
    auto [net, p] = constant_net({3, 1, 1, 3}, 0.0);
    const piml::CfCollocation coll{Matrix{{0.3, 0.0, 0.4}}, {s}};
    const double loss =
        value_of([&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, coll); });
    CHECK(loss == doctest::Approx(0.070307).epsilon(1e-5));
  }
  SUBCASE("duplicating collocation points leaves the loss unchanged") {
    auto [net, pv] = piml::build_network({3, 1, 2, 8}, 4);
    const Vec p = pv.values;
    std::vector<piml::CfState> states{{5.0, 1.0, 15.0}, {12.0, -2.0, 30.0}, {20.0, 0.5, 45.0}};
    const auto scales = piml::CfScales::fit(states);
    const piml::CfCollocation once{scales.normalize(states), states};
    std::vector<piml::CfState> twice_states = states;
    twice_states.insert(twice_states.end(), states.begin(), states.end());
    const piml::CfCollocation twice{scales.normalize(twice_states), twice_states};
    const double a = value_of([&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, once); });
    const double b = value_of([&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, twice); });
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
  }
  SUBCASE("data loss equals a hand MSE") {
    auto [net, p] = constant_net({3, 1, 1, 3}, 0.5);
    const piml::CfObservations obs{Matrix{{0.1, 0.2, 0.3}, {0.0, 0.0, 0.0}}, Vec{{1.0, -0.5}}};
    CHECK(value_of([&](Tape& t) { return piml::cf_data_loss(t, net, p, obs); }) ==
          doctest::Approx((0.25 + 1.0) / 2.0));
  }
  SUBCASE("empty sets") {
    auto [net, p] = constant_net({3, 1, 1, 3}, 0.5);
    const piml::CfObservations obs{Matrix(0, 3), Vec(0)};
    const piml::CfCollocation coll{Matrix(0, 3), {}};
    CHECK_THROWS_AS(value_of([&](Tape& t) { return piml::cf_data_loss(t, net, p, obs); }),
                    piml::Error);
    CHECK_THROWS_AS(
        value_of([&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, coll); }),
        piml::Error);
  }
}

TEST_CASE("loss gradients match finite differences on tiny nets") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Vec p;
    const auto m = tiny_lwr(p, seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    Matrix tx(5, 2);
    Vec rho(5), speed(5);
    for (int i = 0; i < 5; ++i) {
      tx(i, 0) = u(rng);
      tx(i, 1) = u(rng);
      rho[i] = u(rng);
      speed[i] = u(rng);
    }
    const piml::MacroObservations obs{tx, rho, speed};
    const piml::MacroAuxiliary aux{tx};
    const auto n = static_cast<std::size_t>(p.size());
    const std::vector<piml::LossBuilder> losses{
        [&](Tape& t) { return piml::lwr_data_loss(t, m, p, obs); },
        [&](Tape& t) { return piml::lwr_physics_loss(t, m, p, aux); },
    };
    for (std::size_t which = 0; which < losses.size(); ++which) {
      const Vec g = piml::evaluate_loss(losses[which], n, true).grad;
      const auto f = [&](const Vec& q) {
        Vec saved = p;
        p = q;
        const double v = piml::evaluate_loss(losses[which], n, false).value;
        p = saved;
        return v;
      };
      const Vec fd = piml::test::central_difference(f, p, 1e-6);
      CHECK(piml::test::rel_err(g, fd, 1e-8) <= 1e-5);
    }
  }
  const piml::IdmParams idm;
  auto [net, pv] = piml::build_network({3, 1, 2, 5}, 9);
  Vec p = pv.values;
  std::vector<piml::CfState> states{
      {5.0, 1.0, 15.0}, {12.0, -2.0, 30.0}, {20.0, 0.5, 45.0}, {8.0, 0.0, 9.0}, {1.0, 1.0, 5.0}};
  const auto scales = piml::CfScales::fit(states);
  const piml::CfCollocation coll{scales.normalize(states), states};
  const piml::CfObservations obs{coll.inputs, Vec{{0.1, -0.3, 0.2, 0.0, 0.5}}};
  const auto n = static_cast<std::size_t>(p.size());
  const std::vector<piml::LossBuilder> losses{
      [&](Tape& t) { return piml::cf_data_loss(t, net, p, obs); },
      [&](Tape& t) { return piml::cf_physics_loss(t, net, p, idm, coll); },
  };
  for (const auto& loss : losses) {
    const Vec g = piml::evaluate_loss(loss, n, true).grad;
    const auto f = [&](const Vec& q) {
      Vec saved = p;
      p = q;
      const double v = piml::evaluate_loss(loss, n, false).value;
      p = saved;
      return v;
    };
    CHECK(piml::test::rel_err(g, piml::test::central_difference(f, p, 1e-6), 1e-8) <= 1e-5);
  }
}

TEST_CASE("scalarized total equals the weighted sum of the objectives") {
  Vec p;
  const auto m = tiny_lwr(p, 2);
  const piml::MacroObservations obs{Matrix{{0.1, 0.5}, {0.7, 0.2}}, Vec{{0.5, 0.2}},
                                    Vec{{1.0, 0.8}}};
  const piml::MacroAuxiliary aux{Matrix{{0.3, 0.3}, {0.6, 0.9}}};
  for (const piml::LossWeights w : {piml::LossWeights{100.0, 500.0}, piml::LossWeights{0.9, 0.1},
                                    piml::LossWeights{1.0, 0.0}}) {
    const double d = value_of([&](Tape& t) { return piml::lwr_data_loss(t, m, p, obs); });
    const double r = value_of([&](Tape& t) { return piml::lwr_physics_loss(t, m, p, aux); });
    const double total = value_of([&](Tape& t) {
      return piml::scalarized(t, w, piml::lwr_data_loss(t, m, p, obs),
                              piml::lwr_physics_loss(t, m, p, aux));
    });
    CHECK(std::abs(total - piml::scalarized(w, d, r)) <= 1e-12 * std::max(1.0, std::abs(total)));
  }
}

TEST_CASE("sample_auxiliary") {
  const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
  const Matrix a = piml::sample_auxiliary(lo, hi, 4, 42);
  CHECK(a == piml::sample_auxiliary(lo, hi, 4, 42));
  CHECK(a != piml::sample_auxiliary(lo, hi, 4, 43));
  const std::vector<double> blo{-2.0, 10.0, 0.5}, bhi{3.0, 10.5, 0.75};
  const Matrix big = piml::sample_auxiliary(blo, bhi, 10000, 7);
  for (Eigen::Index d = 0; d < 3; ++d) {
    const auto k = static_cast<std::size_t>(d);
    CHECK(big.col(d).minCoeff() >= blo[k]);
    CHECK(big.col(d).maxCoeff() <= bhi[k]);
    const double width = bhi[k] - blo[k];
    const double sigma = width / std::sqrt(12.0) / std::sqrt(10000.0);
    CHECK(std::abs(big.col(d).mean() - 0.5 * (blo[k] + bhi[k])) <= 3.0 * sigma);
  }
  CHECK_THROWS_AS(piml::sample_auxiliary(lo, hi, 0, 1), piml::Error);
}

TEST_CASE("l2_relative_error") {
  const std::vector<double> t{1.0, -2.0, 3.0};
  CHECK(piml::l2_relative_error(t, t) == 0.0);
  CHECK(piml::l2_relative_error(std::vector<double>{0.0, 0.0, 0.0}, t) == 1.0);
  CHECK(piml::l2_relative_error(std::vector<double>{2.0, -4.0, 6.0}, t) == 1.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(6), q(6), cp(6), cq(6);
    const double c = n(rng) * 10.0;
    for (int i = 0; i < 6; ++i) {
      p[i] = n(rng);
      q[i] = n(rng);
      cp[i] = c * p[i];
      cq[i] = c * q[i];
    }
    CHECK(piml::l2_relative_error(cp, cq) ==
          doctest::Approx(piml::l2_relative_error(p, q)).epsilon(1e-12));
  }
}

TEST_CASE("trajectory_rmse") {
  const std::vector<std::vector<double>> a{{1.0, 2.0, 3.0}, {4.0, 5.0}};
  CHECK(piml::trajectory_rmse(a, a) == 0.0);
  std::vector<std::vector<double>> shifted = a;
  for (auto& tr : shifted) {
    for (auto& x : tr) x += 0.75;
  }
  CHECK(piml::trajectory_rmse(shifted, a) == doctest::Approx(0.75));
  // errors {1, 0, -1} and {2, 2}: pooled mean 10 / 5
  const std::vector<std::vector<double>> b{{2.0, 2.0, 2.0}, {6.0, 7.0}};
  CHECK(piml::trajectory_rmse(b, a) == doctest::Approx(std::sqrt(2.0)));
}
