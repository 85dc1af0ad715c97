#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nlhjb/lyapunov.hpp"
#include "random_problems.hpp"

using namespace nlhjb;

namespace {

ControlProblem example() { return power_drift_problem(1.6, 0.1, 1, 0.9); }

LyapunovData affine(double slope, double offset) {
  LyapunovData l;
  l.value = [=](const Point& x) { return slope * x[0] + offset; };
  l.gradient = [=](const Point&) { return Point{slope, 0.0}; };
  l.hessian = [](const Point&) { return Matrix2{0.0, 0.0, 0.0, 0.0}; };
  return l;
}

}  // namespace

TEST_SUITE("lyapunov") {

TEST_CASE("V == 0 gives LV == 0") {
  auto p = testgen::random_problem(5);
  p.lyapunov = affine(0.0, 0.0);
  const Grid g = Grid::build(1, 0.25, 4.0);
  const auto q = build_quadrature(g, 0.75, 8.0);
  for (double v : evaluate_LV(p, g, q)) CHECK(v == 0.0);
}

TEST_CASE("affine V: the jump part vanishes and only the drift term remains") {
  const Grid g = Grid::build(1, 0.25, 4.0);
  const auto q = build_quadrature(g, 0.75, 8.0);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto p = testgen::random_problem(seed);
    p.lyapunov = affine(0.7, 2.0);
    const auto per = evaluate_LV_per_control(p, g, q);
    REQUIRE(per.size() == p.controls.size());
    for (std::size_t t = 0; t < per.size(); ++t)
      for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(std::abs(per[t][i] - 0.7 * p.controls[t].drift_at(g.node(i))[0]) <= 1e-11);
  }
}

TEST_CASE("zeroth order option adds c V") {
  const Grid g = Grid::build(1, 0.25, 4.0);
  const auto q = build_quadrature(g, 0.9, 8.0);
  const auto p = with_discount(example(), 0.5);
  const auto plain = evaluate_LV_per_control(p, g, q);
  const auto with_c = evaluate_LV_per_control(p, g, q, {.zeroth = true});
  for (std::size_t t = 0; t < plain.size(); ++t)
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(with_c[t][i] == doctest::Approx(plain[t][i] - 0.5 * p.lyapunov->value(g.node(i))).epsilon(1e-13));
}

TEST_CASE("drift contribution of the example is -strength gamma |x|^(theta + gamma - 1)") {
  const double gamma = 1.6, theta = 0.1;
  const Grid g = Grid::build(1, 0.25, 16.0);
  const auto q = build_quadrature(g, 0.9, 32.0);
  const auto p = example();
  auto no_drift = p;
  for (auto& c : no_drift.controls) c.drift = nullptr;
  const auto full = evaluate_LV_per_control(p, g, q);
  const auto jumps = evaluate_LV_per_control(no_drift, g, q);
  const double strength[] = {1.0, 2.0};
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = norm(g.node(i));
      if (r < 1.0) continue;
      const double expected = -strength[t] * gamma * std::pow(r, theta + gamma - 1.0);
      CHECK(full[t][i] - jumps[t][i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("jump part of |x|^gamma scales like |x|^(gamma - 2s)") {
  const double gamma = 1.6, s = 0.9;
  const Grid g = Grid::build(1, 0.25, 64.0);
  const auto q = build_quadrature(g, s, 128.0);
  auto p = example();
  for (auto& c : p.controls) c.drift = nullptr;
  const auto jumps = evaluate_LV_per_control(p, g, q)[0];
  std::vector<double> ratios;
  for (double x : {8.0, 16.0, 32.0}) {
    const std::size_t i = g.index_of({static_cast<int>(x / 0.25), 0}).value();
    ratios.push_back(jumps[i] / std::pow(x, gamma - 2.0 * s));
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  CHECK(*lo > 0.0);
  CHECK(*hi / *lo <= 1.5);
}

TEST_CASE("fit_envelope: constant negative values are admissible with k0 >= 1e-12") {
  const Grid g = Grid::build(1, 0.5, 8.0);
  auto lyap = power_lyapunov(1.6);
  lyap.theta = 0.1;
  const auto cert = fit_envelope(std::vector<double>(g.size(), -1.0), lyap, g);
  CHECK(cert.admissible);
  CHECK(cert.k0 >= 1e-12);
  CHECK(cert.k1 > 0.0);
  CHECK(cert.violations.empty());
  CHECK(cert.worst_margin >= 0.0);
}

TEST_CASE("fit_envelope: growing values are not admissible") {
  const Grid g = Grid::build(1, 0.5, 8.0);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = norm(g.node(i));
  auto lyap = power_lyapunov(1.6);
  lyap.theta = 0.1;
  const auto cert = fit_envelope(v, lyap, g);
  CHECK_FALSE(cert.admissible);
  CHECK_FALSE(cert.violations.empty());
  for (std::size_t i : cert.violations) CHECK(norm(g.node(i)) > 4.0);
  CHECK_THROWS_AS(fit_envelope(std::vector<double>(3, 0.0), lyap, g), std::invalid_argument);
}

TEST_CASE("example certificate holds; the outward drift variant fails") {
  const Grid g = Grid::build(1, 0.25, 32.0);
  const auto q = build_quadrature(g, 0.9, 64.0);
  const auto cert = certify(example(), g, q);
  CHECK(cert.admissible);
  CHECK(cert.violations.empty());
  CHECK(cert.worst_margin >= 0.0);
  CHECK(cert.exponent == doctest::Approx(0.7));
  CHECK(cert.far_radius == 64.0);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(cert.values[i] <= cert.k0 - cert.k1 * std::pow(norm(g.node(i)), cert.exponent) + 1e-12);

  ExampleOptions flip;
  flip.outward_drift = true;
  const auto bad = certify(power_drift_problem(1.6, 0.1, 1, 0.9, flip), g, q);
  CHECK_FALSE(bad.admissible);
  CHECK_FALSE(bad.violations.empty());
}

TEST_CASE("certify without a Lyapunov function throws") {
  auto p = example();
  p.lyapunov.reset();
  const Grid g = Grid::build(1, 0.25, 4.0);
  const auto q = build_quadrature(g, 0.9, 8.0);
  CHECK_THROWS_AS(certify(p, g, q), std::invalid_argument);
  CHECK_THROWS_AS(barrier_constant(p, g, q, false), std::invalid_argument);
}

TEST_CASE("barrier constant dominates LV + sup |g|") {
  const Grid g = Grid::build(1, 0.25, 8.0);
  const auto q = build_quadrature(g, 0.9, 16.0);
  const auto p = example();
  const double k0 = barrier_constant(p, g, q, false);
  const auto lv = evaluate_LV(p, g, q);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double gmax = 0.0;
    for (const auto& c : p.controls) gmax = std::max(gmax, std::abs(c.cost_at(g.node(i))));
    CHECK(lv[i] + gmax <= k0);
  }
  CHECK(k0 >= 0.0);
}

TEST_CASE("certificate JSON carries scope, constants and violation coordinates") {
  const Grid g = Grid::build(1, 0.25, 8.0);
  const auto q = build_quadrature(g, 0.9, 16.0);
  ExampleOptions flip;
  flip.outward_drift = true;
  const auto cert = certify(power_drift_problem(1.6, 0.1, 1, 0.9, flip), g, q);
  const auto j = certificate_json(cert, g);
  CHECK(j["scope"] == "inequality verified at grid nodes only");
  CHECK(j["admissible"] == false);
  CHECK(j["worst_margin"].is_null());
  CHECK(j["violations"].size() == cert.violations.size());
  CHECK(j["violations"][0]["x"].get<double>() == g.node(cert.violations[0])[0]);
  CHECK(j["grid"]["far_radius"] == 16.0);
  CHECK(j["grid"]["nodes"] == g.size());

  const auto good = certificate_json(certify(example(), g, q), g);
  CHECK(good["admissible"] == true);
  CHECK(good["violations"].empty());
  CHECK(good["k0"].get<double>() > 0.0);
}

}  // TEST_SUITE
