#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nlhjb/grid.hpp"

using namespace nlhjb;

TEST_SUITE("grid") {

TEST_CASE("one-dimensional lattice ball with unit spacing lists -2..2") {
  const auto m = ball_lattice(1, 1.0, 2.0);
  REQUIRE(m.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(m[i] == LatticeIndex{i - 2, 0});
  const Grid g = Grid::build(1, 0.5, 2.0);
  CHECK(g.node(g.origin_index())[0] == 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.node(i)[0] == 0.5 * (static_cast<double>(i) - 4.0));
}

TEST_CASE("half spacing on the unit ball gives five symmetric points") {
  const auto m = ball_lattice(1, 0.5, 1.0);
  REQUIRE(m.size() == 5);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i][0] == -m[m.size() - 1 - i][0]);
}

TEST_CASE("two-dimensional count matches brute-force enumeration") {
  CHECK(ball_lattice(2, 1.0, 1.5).size() == 9);
  for (double h : {0.25, 0.5, 0.3}) {
    for (double R : {2.0, 2.4, 3.1}) {
      std::size_t count = 0;
      const int n = static_cast<int>(R / h) + 1;
      for (int a = -n; a <= n; ++a)
        for (int b = -n; b <= n; ++b)
          if (std::hypot(a * h, b * h) <= R) ++count;
      CHECK(Grid::build(2, h, R).size() == count);
      CHECK(ball_lattice(2, h, R).size() == count);
    }
  }
}

TEST_CASE("radius below four spacings is rejected even where the lattice ball is fine") {
  CHECK_THROWS_AS(Grid::build(1, 1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::build(2, 1.0, 1.5), std::invalid_argument);
  CHECK_NOTHROW(Grid::build(1, 0.5, 2.0));
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(Grid::build(1, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::build(1, -0.5, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::build(1, 1.0, 3.9), std::invalid_argument);
  CHECK_THROWS_AS(Grid::build(3, 1.0, 8.0), std::invalid_argument);
}

TEST_CASE("node set is symmetric, inside the ball and ordered lexicographically") {
  for (int d : {1, 2}) {
    const Grid g = Grid::build(d, 0.25, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(norm(g.node(i)) <= 2.0 + 1e-12);
      const auto& m = g.lattice(i);
      CHECK(g.index_of({-m[0], -m[1]}).has_value());
      if (i > 0) CHECK(g.lattice(i - 1) < m);
    }
    CHECK(norm(g.node(g.origin_index())) <= 0.125);
  }
}

TEST_CASE("index to coordinates to nearest index is the identity") {
  for (int d : {1, 2}) {
    const Grid g = Grid::build(d, 0.3, 2.4);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.nearest_index(g.node(i)) == i);
  }
}

TEST_CASE("identical parameters give identical orderings") {
  const Grid a = Grid::build(2, 0.25, 3.0), b = Grid::build(2, 0.25, 3.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.lattice(i) == b.lattice(i));
}

TEST_CASE("evaluate_extended on nodes, zero and function exteriors") {
  const Grid g = Grid::build(1, 0.5, 2.0);
  std::vector<double> field(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) field[i] = 1.0 + i;
  field[g.index_of({1, 0}).value()] = 3.7;
  CHECK(evaluate_extended(g, field, ExteriorRule::zero(), {0.5, 0.0}) == 3.7);
  CHECK(evaluate_extended(g, field, ExteriorRule::zero(), {3.0, 0.0}) == 0.0);
  const auto V = ExteriorRule::function([](const Point& x) { return std::pow(std::abs(x[0]), 0.9); });
  CHECK(evaluate_extended(g, field, V, {5.0, 0.0}) == doctest::Approx(std::pow(5.0, 0.9)).epsilon(1e-15));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(evaluate_extended(g, field, V, g.node(i)) == field[i]);
  CHECK(evaluate_extended(g, field, ExteriorRule::constant(2.5), {-7.0, 0.0}) == 2.5);
}

TEST_CASE("boundary rule returns the value at the nearest node of the projection") {
  const Grid g = Grid::build(2, 0.5, 2.0);
  std::vector<double> field(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) field[i] = g.node(i)[0] - 2.0 * g.node(i)[1];
  const double far = evaluate_extended(g, field, ExteriorRule::boundary(), {10.0, 0.0});
  CHECK(far == field[g.index_of({4, 0}).value()]);
  const double diag = evaluate_extended(g, field, ExteriorRule::boundary(), {-30.0, -30.0});
  CHECK(diag == field[g.nearest_index({-std::sqrt(2.0), -std::sqrt(2.0)})]);
}

TEST_CASE("boundary rule has no field-independent value") {
  CHECK_THROWS_AS(ExteriorRule::boundary().value({5.0, 0.0}), std::logic_error);
}

}  // TEST_SUITE
