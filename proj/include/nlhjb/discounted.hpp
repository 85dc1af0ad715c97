#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nlhjb/operator.hpp"
#include "nlhjb/problem.hpp"

namespace nlhjb {

struct SolverOptions {
  double tol = 1e-10;           // sup norm of the nonlinear residual at acceptance
  int max_iter = 100;           // policy sweeps
  int linear_max_iter = 5000;   // per BiCGSTAB call
  bool value_iteration_fallback = true;
  int value_max_iter = 200000;
};

struct SweepRecord {
  int iteration = 0;
  double residual = 0.0;        // sup norm of the nonlinear residual after the sweep
  int policy_changes = 0;
  double monotone_violation = 0.0;  // max increase of the iterate over the previous sweep
  int linear_iterations = 0;
};

struct DiscountedSolution {
  std::vector<double> w;
  std::vector<int> policy;
  double residual_inf_norm = 0.0;
  int iterations = 0;
  std::optional<double> alpha;
  bool converged = false;
  std::string method = "policy-iteration";
  std::vector<SweepRecord> trace;
  double monotone_violation = 0.0;  // worst over all sweeps after the first
};

/// Howard iteration on inf_tau(L_tau w + c_tau w + g_tau) = 0. Each frozen
/// policy system is solved by BiCGSTAB on the row-scaled matrix until its
/// residual is below tol / 10. A policy only switches at nodes where the
/// improvement exceeds 1e-3 tol. Non-convergence is flagged, not thrown.
DiscountedSolution solve_policy_iteration(const DiscreteOperator& op, const SolverOptions& options = {},
                                          const std::vector<double>* initial_guess = nullptr);

/// Pointwise relaxation w_i <- w_i - r_i / diag at the minimizing control.
DiscountedSolution solve_value_iteration(const DiscreteOperator& op, const SolverOptions& options = {},
                                         const std::vector<double>* initial_guess = nullptr);

struct BoundViolation {
  std::size_t node = 0;
  double value = 0.0;
  double bound = 0.0;
};

struct BarrierReport {
  bool passed = true;
  double k0 = 0.0;
  double c_circ = 0.0;
  double min_margin = 0.0;  // min over nodes of bound - |w|
  std::size_t worst_node = 0;
  std::vector<BoundViolation> violations;
};

/// Checks |w(x_i)| <= k0 / c_circ + V(x_i) at every node, with k0 from the
/// problem's Lyapunov data and c_circ = -sup c_tau over the grid. Throws
/// std::invalid_argument when the problem has no Lyapunov data.
BarrierReport check_barrier(const DiscountedSolution& sol, const ControlProblem& p, const Grid& grid);

/// Checks ||w||_inf <= sup_tau ||g_tau||_inf / c_circ (zero exterior data).
BarrierReport check_sup_bound(const DiscountedSolution& sol, const ControlProblem& p, const Grid& grid);

/// -max over controls and nodes of c_tau; throws when it is not positive.
double zeroth_order_margin(const ControlProblem& p, const Grid& grid);

}  // namespace nlhjb
