#include <cmath>
#include <random>

#include "doctest.h"
#include "piml/error.hpp"
#include "piml/physics.hpp"

using piml::CfState;
using piml::IdmParams;
using piml::Matrix;
using piml::Vec;

namespace {

const IdmParams kRef{30.0, 1.5, 2.0, 1.0, 2.0, 4.0};

}  // namespace

TEST_CASE("idm_acceleration examples") {
  CHECK(piml::idm_acceleration({0.0, 0.0, kRef.s0}, kRef) == doctest::Approx(0.0));
  CHECK(std::abs(piml::idm_acceleration({kRef.v0, 0.0, 1e9}, kRef)) < 1e-12);
  // s* = 2 + 10 * 1.5 = 17; a = 1 - (1/3)^4 - (17/20)^2
  const double a = piml::idm_acceleration({10.0, 0.0, 20.0}, kRef);
  CHECK(a == doctest::Approx(1.0 - 1.0 / 81.0 - 0.7225).epsilon(1e-14));
  CHECK(a == doctest::Approx(0.265154).epsilon(1e-6));
  CHECK_THROWS_WITH_AS(piml::idm_acceleration({1.0, 0.0, 0.0}, kRef), "nonpositive spacing",
                       piml::Error);
}

TEST_CASE("idm monotonicity and the a_max bound on grids") {
  for (double dv = -3.0; dv <= 3.0; dv += 1.5) {
    for (double h = 2.0; h <= 80.0; h += 6.0) {
      double prev = std::numeric_limits<double>::infinity();
      for (double v = 0.0; v <= kRef.v0; v += 0.5) {
        const double a = piml::idm_acceleration({v, dv, h}, kRef);
        CHECK(a <= kRef.a_max);
        if (dv >= 0.0) CHECK(a <= prev);  // s* grows with v when closing or level
        prev = a;
      }
    }
    for (double v = 0.0; v <= kRef.v0; v += 2.5) {
      double prev = -std::numeric_limits<double>::infinity();
      for (double h = 0.5; h <= 100.0; h += 0.5) {
        const double a = piml::idm_acceleration({v, dv, h}, kRef);
        CHECK(a >= prev);
        prev = a;
      }
    }
  }
}

TEST_CASE("rollout with zero acceleration is exact kinematics") {
  const std::size_t n = 50;
  std::vector<double> lx(n, 1e6), lv(n, 0.0);
  const auto r = piml::rollout(3.0, 4.0, lx, lv, [](const CfState&) { return 0.0; }, 0.1);
  REQUIRE(r.x.size() == n);
  double x = 3.0;
  for (std::size_t k = 0; k < n; ++k) {
    CHECK(r.x[k] == x);
    CHECK(r.v[k] == 4.0);
    x = x + 4.0 * 0.1;
  }
  CHECK_FALSE(r.collision);
}

TEST_CASE("free-flow rollout approaches v0 monotonically from below") {
  const std::size_t n = 3000;
  std::vector<double> lx(n, 1e9), lv(n, 0.0);
  const auto model = [](const CfState& s) { return piml::idm_acceleration(s, kRef); };
  const auto r = piml::rollout(0.0, 5.0, lx, lv, model, 0.1);
  for (std::size_t k = 1; k < n; ++k) {
    CHECK(r.v[k] >= r.v[k - 1]);
    CHECK(r.v[k] < kRef.v0);
  }
  CHECK(r.v.back() > 0.97 * kRef.v0);
}

TEST_CASE("IDM rollout equals a hand-stepped trace") {
  const double dt = 0.1;
  std::vector<double> lx{40.0, 41.0, 42.1, 43.3};
  std::vector<double> lv{10.0, 11.0, 12.0, 13.0};
  const auto r = piml::rollout(20.0, 10.0, lx, lv,
                               [](const CfState& s) { return piml::idm_acceleration(s, kRef); }, dt);
  // hand-stepped with the formula written out
  double x = 20.0, v = 10.0;
  std::vector<double> hx{x}, hv{v};
  for (int k = 0; k < 3; ++k) {
    const double h = lx[k] - x;
    const double dv = v - lv[k];
    const double s_star = 2.0 + v * 1.5 + v * dv / (2.0 * std::sqrt(1.0 * 2.0));
    const double a = 1.0 * (1.0 - std::pow(v / 30.0, 4.0) - (s_star / h) * (s_star / h));
    v = std::max(0.0, v + a * dt);
    x = x + v * dt;
    hx.push_back(x);
    hv.push_back(v);
  }
  CHECK(r.x == hx);
  CHECK(r.v == hv);
}

TEST_CASE("rollout flags collisions and clamps spacing") {
  std::vector<double> lx{5.0, 5.0, 5.0}, lv{0.0, 0.0, 0.0};
  double seen_h = -1.0;
  const auto r = piml::rollout(10.0, 1.0, lx, lv,
                               [&](const CfState& s) {
                                 seen_h = s.h;
                                 return 0.0;
                               },
                               0.1);
  CHECK(r.collision);
  CHECK(seen_h == piml::kCollisionSpacing);
  CHECK(r.x.size() == 3);
}

TEST_CASE("rollout step refinement converges at first order") {
  const auto model = [](const CfState& s) { return piml::idm_acceleration(s, kRef); };
  const auto final_x = [&](double dt) {
    const auto n = static_cast<std::size_t>(std::lround(10.0 / dt)) + 1;
    std::vector<double> lx(n), lv(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * dt;
      lv[k] = 8.0 + 2.0 * std::sin(0.5 * t);
      lx[k] = 30.0 + 8.0 * t + 4.0 * (1.0 - std::cos(0.5 * t));
    }
    return piml::rollout(0.0, 8.0, lx, lv, model, dt).x.back();
  };
  CHECK(std::abs(final_x(0.1) - final_x(0.05)) <= 0.1);
  const double d1 = std::abs(final_x(0.0125) - final_x(0.00625));
  const double d2 = std::abs(final_x(0.00625) - final_x(0.003125));
  CHECK(d1 < 1e-3);
  CHECK(d1 / d2 == doctest::Approx(2.0).epsilon(0.25));
}

namespace {

std::vector<piml::CalibrationSample> idm_samples(const IdmParams& p, double noise,
                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> v(0.0, 25.0), dv(-4.0, 4.0), h(4.0, 60.0);
  std::vector<piml::CalibrationSample> out;
  for (int i = 0; i < 400; ++i) {
    const CfState s{v(rng), dv(rng), h(rng)};
    out.push_back({s, piml::idm_acceleration(s, p) + noise * n(rng)});
  }
  return out;
}

}  // namespace

TEST_CASE("GA calibration on noise-free IDM data is at least as fit as the truth") {
  const auto samples = idm_samples(kRef, 0.0, 1);
  piml::GaConfig cfg;
  cfg.seed = 3;
  const auto r = piml::calibrate_idm(samples, cfg);
  CHECK(r.fitness <= piml::idm_fitness(kRef, samples) + 1e-6);
  CHECK(r.params.delta == 4.0);
  CHECK(r.fitness <= r.log.back().best_fitness);
  CHECK(r.log.size() == static_cast<std::size_t>(cfg.generations + 1));
  for (std::size_t g = 1; g < r.log.size(); ++g) {
    CHECK(r.log[g].best_fitness <= r.log[g - 1].best_fitness);  // elitism
  }
}

TEST_CASE("GA calibration is deterministic for a seed") {
  const auto samples = idm_samples(kRef, 0.05, 2);
  piml::GaConfig cfg;
  cfg.generations = 30;
  cfg.seed = 11;
  const auto a = piml::calibrate_idm(samples, cfg);
  const auto b = piml::calibrate_idm(samples, cfg);
  CHECK(a.params == b.params);
  CHECK(a.fitness == b.fitness);
}

TEST_CASE("GA config validation") {
  piml::GaConfig cfg;
  cfg.population = 7;
  CHECK_THROWS_AS(cfg.validate(), piml::Error);
  const std::vector<piml::CalibrationSample> none;
  CHECK_THROWS_AS(piml::calibrate_idm(none, piml::GaConfig{}), piml::Error);
}

namespace {

double fd_residual(const piml::LwrModel& m, const Vec& p, double tn, double xn, double d) {
  const auto rho = [&](double t, double x) {
    return m.punn.forward(p, Matrix{{t, x}})(0, 0);
  };
  const auto q = [&](double t, double x) {
    return m.fd.forward(p, Matrix{{rho(t, x)}})(0, 0);
  };
  return (rho(tn + d, xn) - rho(tn - d, xn)) / (2 * d) +
         m.scales.flux_coefficient() * (q(tn, xn + d) - q(tn, xn - d)) / (2 * d);
}

piml::LwrModel random_model(std::uint64_t seed, piml::LwrScales scales = {}) {
  auto [punn, pp] = piml::build_network({2, 1, 3, 20}, seed);
  auto [fd, fp] = piml::build_network({1, 1, 2, 20}, seed + 1000);
  (void)pp;
  (void)fp;
  return {punn, fd.rebased(punn.num_params()), scales};
}

Vec joint_params(std::uint64_t seed) {
  auto [punn, pp] = piml::build_network({2, 1, 3, 20}, seed);
  auto [fd, fp] = piml::build_network({1, 1, 2, 20}, seed + 1000);
  pp.append(fp, "fd.");
  return pp.values;
}

}  // namespace

TEST_CASE("lwr_residual examples") {
  SUBCASE("constant density field") {
    piml::LwrModel m = random_model(1);
    Vec p = joint_params(1);
    p.head(static_cast<Eigen::Index>(m.punn.num_params() - 1)).setZero();
    CHECK(piml::lwr_residual(m, p, 0.3, 0.7) == 0.0);
  }
  SUBCASE("rho = x with identity FD learner") {
    const piml::LwrModel m{piml::Mlp({2, 1, 0, 1}, 0), piml::Mlp({1, 1, 0, 1}, 3), {}};
    const Vec p{{0.0, 1.0, 0.0, 1.0, 0.0}};
    CHECK(piml::lwr_residual(m, p, 0.25, 0.5) == doctest::Approx(1.0));
  }
  SUBCASE("matches a finite-difference stencil on random nets") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const piml::LwrScales scales{0.0, 3600.0, 0.0, 5000.0, 0.2, 1.0};
      const auto m = random_model(seed, seed % 2 ? scales : piml::LwrScales{});
      const Vec p = joint_params(seed);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.05, 0.95);
      const double tn = u(rng), xn = u(rng);
      const double t = m.scales.t_min + tn * m.scales.t_span;
      const double x = m.scales.x_min + xn * m.scales.x_span;
      const double r = piml::lwr_residual(m, p, t, x);
      const double fd = fd_residual(m, p, tn, xn, 1e-4);
      CHECK(std::abs(r - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3));
    }
  }
}

TEST_CASE("doubling tangent seeds doubles the derivative terms") {
  const auto m = random_model(5);
  const Vec p = joint_params(5);
  piml::Tape tape;
  const piml::NodeId in = tape.constant(Matrix{{0.2, 0.4}, {0.6, 0.1}});
  const auto unit = piml::seed_inputs(tape, in, 2);
  piml::DualNode doubled{.value = in};
  for (const auto t : unit.tangents) {
    doubled.tangents.push_back(tape.constant(2.0 * tape.value(t)));
  }
  const auto a = m.punn.forward(tape, p, unit);
  const auto b = m.punn.forward(tape, p, doubled);
  for (int k = 0; k < 2; ++k) {
    CHECK(tape.value(b.tangents[k]).isApprox(2.0 * tape.value(a.tangents[k]), 1e-14));
  }
}
