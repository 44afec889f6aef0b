#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "piml/error.hpp"
#include "piml/moo.hpp"
#include "piml/oracle.hpp"

using piml::GradientSet;
using piml::Vec;

namespace {

Vec v2(double a, double b) { return Vec{{a, b}}; }

Vec random_vec(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

GradientSet pair(const Vec& gb, const Vec& gr) { return GradientSet({gb, gr}, {"data", "physics"}); }

}  // namespace

TEST_CASE("frank_wolfe_min_norm examples") {
  SUBCASE("identical gradients") {
    const Vec g = v2(0.3, -2.0);
    const auto r = piml::frank_wolfe_min_norm(pair(g, g));
    CHECK(r.point.isApprox(g));
    CHECK(r.weights.alpha[0] == 0.5);
    CHECK(r.weights.alpha[1] == 0.5);
  }
  SUBCASE("opposed gradients") {
    const auto set = pair(v2(1, 0), v2(-1, 0));
    const auto r = piml::frank_wolfe_min_norm(set);
    CHECK(r.point.norm() == 0.0);
    CHECK(piml::stationarity_check(set));
  }
  SUBCASE("orthogonal unit gradients") {
    // closed form: alpha* = clamp(<g2-g1,g2>/|g1-g2|^2, 0, 1) = 1/2
    const auto r = piml::frank_wolfe_min_norm(pair(v2(1, 0), v2(0, 1)));
    CHECK(r.point.isApprox(v2(0.5, 0.5)));
    CHECK(r.weights.alpha[0] == doctest::Approx(0.5));
  }
  SUBCASE("general path reproduces the pair closed form") {
    piml::FrankWolfeOptions opts;
    opts.closed_form_pair = false;
    const auto r = piml::frank_wolfe_min_norm(pair(v2(1, 0), v2(0, 1)), opts);
    CHECK((r.point - v2(0.5, 0.5)).norm() <= 1e-8);
    CHECK(r.weights.valid());
  }
  SUBCASE("single gradient") {
    const GradientSet one({v2(3, 4)});
    CHECK(piml::frank_wolfe_min_norm(one).point == v2(3, 4));
  }
}

TEST_CASE("uniform start and simplex weights for three objectives") {
  const GradientSet set({Vec{{1.0, 0.0, 0.0}}, Vec{{0.0, 1.0, 0.0}}, Vec{{0.0, 0.0, 1.0}}});
  const auto r = piml::frank_wolfe_min_norm(set);
  // symmetric instance: the uniform start is already optimal
  CHECK(r.iterations == 0);
  for (const double a : r.weights.alpha) CHECK(a == doctest::Approx(1.0 / 3.0));
  CHECK(piml::wolfe_certificate(r.point, set) >= -1e-12);
}

TEST_CASE("wolfe_certificate examples") {
  const auto set = pair(v2(1, 0), v2(0, 1));
  CHECK(piml::wolfe_certificate(v2(0.5, 0.5), set) == doctest::Approx(0.0).epsilon(1e-15));
  const Vec g = v2(2, -1);
  CHECK(piml::wolfe_certificate(g, GradientSet({g})) == doctest::Approx(0.0));
  CHECK(piml::wolfe_certificate(v2(1, 0), set) == doctest::Approx(-1.0));
}

TEST_CASE("dual_cone_contains examples") {
  CHECK(piml::dual_cone_contains(v2(1, 1), pair(v2(1, 0), v2(0, 1))));
  CHECK_FALSE(piml::dual_cone_contains(v2(-1, 1), pair(v2(-2, 1), v2(1, 0))));
  CHECK(piml::dual_cone_contains(v2(0, 0), pair(v2(1, 0), v2(0, 1))));
}

TEST_CASE("dual_cone_contains is invariant to positive gradient scaling") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const Vec v = random_vec(rng, 4);
    const Vec a = random_vec(rng, 4);
    const Vec b = random_vec(rng, 4);
    CHECK(piml::dual_cone_contains(v, pair(a, b)) ==
          piml::dual_cone_contains(v, pair(scale(rng) * a, scale(rng) * b)));
  }
}

TEST_CASE("dcgd_center examples") {
  SUBCASE("orthogonal") {
    // g_c = (1,1), <g_c, grad L> = 2, |g_c|^2 = 2
    const auto o = piml::dcgd_center(pair(v2(1, 0), v2(0, 1)));
    CHECK(o.direction.isApprox(v2(1, 1)));
    CHECK_FALSE(o.stationary);
    CHECK(o.angle == doctest::Approx(std::numbers::pi / 2));
  }
  SUBCASE("identical") {
    const Vec g = v2(0.7, -0.2);
    CHECK(piml::dcgd_center(pair(g, g)).direction.isApprox(2.0 * g));
  }
  SUBCASE("nearly opposed triggers the conflict stop") {
    for (const double xi : {1e-4, 1e-6, 1e-9}) {
      const auto o = piml::dcgd_center(pair(v2(1, 0), v2(-1, xi)));
      CHECK(o.stop == piml::StopReason::conflict_threshold);
      CHECK(o.stationary);
      CHECK(o.direction.norm() == 0.0);
    }
  }
  SUBCASE("vanished objective gradient stops") {
    const auto o = piml::dcgd_center(pair(v2(0, 0), v2(1, 1)));
    CHECK(o.stationary);
    CHECK(o.stop == piml::StopReason::stationary);
  }
}

TEST_CASE("dcgd_average examples") {
  CHECK(piml::dcgd_average(pair(v2(1, 0), v2(0, 1))).direction.isApprox(v2(1, 1)));
  // grad L = (-1,1): 1/2 (0,1) + 1/2 (1/5, 2/5)
  const auto o = piml::dcgd_average(pair(v2(-2, 1), v2(1, 0)));
  CHECK(o.direction[0] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(o.direction[1] == doctest::Approx(0.7).epsilon(1e-14));
  const Vec g = v2(-3, 1);
  CHECK(piml::dcgd_average(pair(g, g)).direction.isApprox(2.0 * g));
}

TEST_CASE("dcgd_projection examples") {
  CHECK(piml::dcgd_projection(pair(v2(1, 0), v2(0, 1))).direction.isApprox(v2(1, 1)));
  // <grad L, g_r> = -1 < 0: remove the g_r component
  const auto o = piml::dcgd_projection(pair(v2(-2, 1), v2(1, 0)));
  CHECK(o.direction.isApprox(v2(0, 1)));
  CHECK(o.direction.dot(v2(-2, 1)) >= 0.0);
  // swapped roles: the conflict is now with the data gradient
  const auto s = piml::dcgd_projection(pair(v2(1, 0), v2(-2, 1)));
  CHECK(s.direction.isApprox(v2(0, 1)));
}

TEST_CASE("dcgd needs exactly two objectives") {
  const GradientSet three({v2(1, 0), v2(0, 1), v2(1, 1)});
  CHECK_THROWS_AS(piml::dcgd_center(three), piml::Error);
}

TEST_CASE("stationarity_check examples") {
  CHECK(piml::stationarity_check(pair(v2(1, 0), v2(-1, 0)), 1e-8));
  CHECK(piml::stationarity_check(pair(v2(0, 0), v2(0, 1)), 1e-8));
  CHECK_FALSE(piml::stationarity_check(pair(v2(1, 0), v2(0, 1)), 1e-8));
}

TEST_CASE("common descent from the min-norm point") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 3;
    const int dim = 2 + trial % 9;
    std::vector<Vec> g;
    for (int j = 0; j < n; ++j) g.push_back(random_vec(rng, dim));
    const GradientSet set(g);
    const auto r = piml::frank_wolfe_min_norm(set);
    CHECK(r.weights.valid());
    const double x_sq = r.point.squaredNorm();
    if (r.point.norm() > 1e-8) {
      for (const auto& gj : g) CHECK(-r.point.dot(gj) <= -x_sq + 1e-8);
    }
  }
}

TEST_CASE("min-norm matches brute force and the pair closed form") {
  const auto report = piml::run_min_norm_oracle(40, 7);
  CHECK(report.max_grid_deviation <= 1e-4);
  CHECK(report.max_closed_form_deviation <= 1e-8);
  CHECK(report.min_certificate >= -1e-8);
}

TEST_CASE("dual-cone combiners stay in the dual cone") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = 2 + trial % 10;
    const auto set = pair(random_vec(rng, dim), random_vec(rng, dim));
    for (const auto& o : {piml::dcgd_center(set), piml::dcgd_average(set),
                          piml::dcgd_projection(set)}) {
      CHECK(o.direction.dot(set.grads[0]) >= -1e-10);
      CHECK(o.direction.dot(set.grads[1]) >= -1e-10);
    }
    // conflicting pairs exercise the projection branches
    const auto conflict = pair(set.grads[0], -set.grads[0] + 0.3 * random_vec(rng, dim));
    for (const auto& o : {piml::dcgd_center(conflict), piml::dcgd_average(conflict),
                          piml::dcgd_projection(conflict)}) {
      CHECK(o.direction.dot(conflict.grads[0]) >= -1e-10);
      CHECK(o.direction.dot(conflict.grads[1]) >= -1e-10);
    }
  }
}

TEST_CASE("dcgd_center bisects the two gradients") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 500; ++trial) {
    const auto set = pair(random_vec(rng, 6), random_vec(rng, 6));
    const auto o = piml::dcgd_center(set);
    if (o.direction.norm() > 0.0) {
      const double a = piml::angle_between(o.direction, set.grads[0]);
      const double b = piml::angle_between(o.direction, set.grads[1]);
      CHECK(std::abs(a - b) <= 1e-8);
      CHECK(a == doctest::Approx(o.angle / 2).epsilon(1e-7));
    }
  }
}

TEST_CASE("scalarization gap at a point where one gradient vanishes") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec g2 = random_vec(rng, 5);
    const auto set = pair(Vec::Zero(5), g2);
    CHECK(piml::stationarity_check(set));
    for (const double beta : {0.0, 0.25, 0.5, 0.75, 0.99}) {
      const Vec scalarized = beta * set.grads[0] + (1.0 - beta) * g2;
      CHECK(scalarized.norm() == doctest::Approx((1.0 - beta) * g2.norm()));
      CHECK(scalarized.norm() > 0.0);
    }
  }
}

TEST_CASE("tmgd_combine marks stationarity") {
  const auto o = piml::tmgd_combine(pair(v2(2, 0), v2(-1, 0)));
  CHECK(o.stationary);
  CHECK(o.direction.norm() == 0.0);
  const auto m = piml::tmgd_combine(pair(v2(1, 0), v2(0, 1)));
  CHECK_FALSE(m.stationary);
  CHECK(m.weights.valid());
}
