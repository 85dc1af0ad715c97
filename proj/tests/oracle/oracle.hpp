#pragma once

// Slow, direct reference computations for the test suite. Nothing here calls
// the operator assembly or the solvers of the library.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlhjb/grid.hpp"
#include "nlhjb/problem.hpp"
#include "nlhjb/quadrature.hpp"

namespace oracle {

using nlhjb::Grid;
using nlhjb::Point;

inline constexpr std::size_t kMaxNodes = 200;

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frozen-control operator u -> A u + b, with A dense; includes the zeroth
/// order term and the running cost.
struct DenseOracle {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd constant;
  std::string label;
};

/// One dense operator per control, summed term by term from the problem
/// coefficients and the raw quadrature weights with delta(u, x, y) written out.
/// Throws OracleError above kMaxNodes nodes or for Levy/diffusion parts in 2-d.
std::vector<DenseOracle> build_dense(const nlhjb::ControlProblem& p, const Grid& grid,
                                     const nlhjb::JumpQuadrature& q, const nlhjb::ExteriorRule& ext);

std::vector<double> dense_apply(const DenseOracle& o, const std::vector<double>& u);

struct FixedPoint {
  std::vector<double> w;
  int iterations = 0;
  double contraction = 0.0;
  double last_update = 0.0;
};

/// u <- u + eta min_tau(A_tau u + b_tau) until the update is below tol.
/// eta <= 0 selects 1 / max |A_ii|. Throws OracleError when the
/// contraction factor is not below 1.
FixedPoint dense_fixed_point(const std::vector<DenseOracle>& ops, double tol = 1e-13, double eta = 0.0,
                             int max_iter = 5'000'000);

/// Reference value of C(1,s)/2 * integral of delta(u, x, y) |y|^{-1-2s} over
/// the real line (the standard fractional Laplacian with a minus sign) for
/// test in {"cos", "gaussian"}, and of (2-2s) * the same integral over
/// |y| <= truncation without the constant for "quadratic-truncated".
/// Each value is computed by adaptive quadrature and cross-checked against
/// an independent closed form (Fourier symbol or antiderivative) to 1e-8.
double fractional_laplacian_reference(const std::string& test, double x, double s,
                                      double truncation = 0.0);

/// Standard constant C(d, s) = s 4^s Gamma(d/2 + s) / (pi^{d/2} Gamma(1 - s)).
double standard_constant(int d, double s);

/// Central finite differences of a scalar field.
Point fd_gradient(const nlhjb::ScalarField& f, const Point& x, int d, double step = 1e-5);
nlhjb::Matrix2 fd_hessian(const nlhjb::ScalarField& f, const Point& x, int d, double step = 1e-4);

}  // namespace oracle
