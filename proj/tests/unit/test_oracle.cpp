#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracle.hpp"
#include "random_problems.hpp"

using namespace nlhjb;

TEST_SUITE("oracle") {

TEST_CASE("standard constant at closed-form points") {
  CHECK(oracle::standard_constant(1, 0.5) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-15));
  CHECK(oracle::standard_constant(2, 0.5) == doctest::Approx(0.5 / std::numbers::pi).epsilon(1e-15));
}

TEST_CASE("cos reference is -cos x for every order") {
  for (double s : {0.6, 0.75, 0.9}) {
    CHECK(oracle::fractional_laplacian_reference("cos", 0.0, s) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(std::abs(oracle::fractional_laplacian_reference("cos", std::numbers::pi / 2, s)) <= 1e-10);
    CHECK(oracle::fractional_laplacian_reference("cos", 1.0, s) == doctest::Approx(-std::cos(1.0)).epsilon(1e-10));
  }
}

TEST_CASE("gaussian reference at the origin is -4^s Gamma(s + 1/2) / sqrt(pi)") {
  for (double s : {0.6, 0.75, 0.9}) {
    const double expected = -std::pow(4.0, s) * std::tgamma(s + 0.5) / std::sqrt(std::numbers::pi);
    CHECK(oracle::fractional_laplacian_reference("gaussian", 0.0, s) == doctest::Approx(expected).epsilon(1e-9));
  }
  CHECK(oracle::fractional_laplacian_reference("gaussian", 5.0, 0.75) > 0.0);
}

TEST_CASE("truncated quadratic reference is 4 T^(2 - 2s)") {
  CHECK(oracle::fractional_laplacian_reference("quadratic-truncated", 0.0, 0.75, 4.0) ==
        doctest::Approx(8.0).epsilon(1e-12));
  CHECK_THROWS_AS(oracle::fractional_laplacian_reference("quadratic-truncated", 0.0, 0.75), oracle::OracleError);
}

TEST_CASE("reference rejects unknown tests and orders outside (1/2, 1)") {
  CHECK_THROWS_AS(oracle::fractional_laplacian_reference("sine", 0.0, 0.75), oracle::OracleError);
  CHECK_THROWS_AS(oracle::fractional_laplacian_reference("cos", 0.0, 0.4), oracle::OracleError);
}

TEST_CASE("dense fixed point of a diagonal system") {
  oracle::DenseOracle a{-Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d(1.0, -2.0, 0.5), "a"};
  oracle::DenseOracle b{-2.0 * Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d(4.0, -2.0, 0.0), "b"};
  const auto one = oracle::dense_fixed_point({a}, 1e-14);
  CHECK(one.w[0] == doctest::Approx(1.0));
  CHECK(one.w[1] == doctest::Approx(-2.0));
  CHECK(one.w[2] == doctest::Approx(0.5));
  // min(1 - u, 4 - 2u) = 0 gives u = 1; min(-2 - u, -2 - 2u) = 0 gives u = -2; min(0.5 - u, -2u) = 0 gives u = 0.
  const auto two = oracle::dense_fixed_point({a, b}, 1e-14);
  CHECK(two.w[0] == doctest::Approx(1.0));
  CHECK(two.w[1] == doctest::Approx(-2.0));
  CHECK(std::abs(two.w[2]) <= 1e-12);
  CHECK(two.contraction < 1.0);
}

TEST_CASE("dense fixed point refuses a non-contracting map") {
  oracle::DenseOracle grow{Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1.0, 1.0), "grow"};
  CHECK_THROWS_AS(oracle::dense_fixed_point({grow}), oracle::OracleError);
  CHECK_THROWS_AS(oracle::dense_fixed_point({}), oracle::OracleError);
}

TEST_CASE("dense oracle enforces its size cap and input sizes") {
  const Grid big = Grid::build(1, 0.125, 16.0);
  const auto q = build_quadrature(big, 0.75, 17.0);
  CHECK_THROWS_AS(oracle::build_dense(testgen::random_problem(1), big, q, ExteriorRule::zero()),
                  oracle::OracleError);
  const Grid g = Grid::build(1, 0.25, 1.0);
  const auto small = oracle::build_dense(testgen::random_problem(1), g, build_quadrature(g, 0.75, 2.0),
                                         ExteriorRule::zero());
  CHECK(small.size() == 2);
  CHECK_THROWS_AS(oracle::dense_apply(small[0], {1.0, 2.0}), oracle::OracleError);
}

TEST_CASE("finite differences of a quadratic") {
  const ScalarField f = [](const Point& x) { return x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] * x[1]; };
  const Point x{0.5, -1.0};
  const auto g = oracle::fd_gradient(f, x, 2);
  CHECK(g[0] == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(3.5).epsilon(1e-8));
  const auto H = oracle::fd_hessian(f, x, 2);
  CHECK(H[0] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(H[1] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(H[3] == doctest::Approx(-2.0).epsilon(1e-5));
}

}  // TEST_SUITE
