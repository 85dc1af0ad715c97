#include "nlhjb/discounted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace nlhjb {
namespace {

// Frozen-policy matrix scaled by the inverse magnitude of its diagonal,
// exposed to Eigen's iterative solvers without being stored.
class ScaledPolicyMatrix;

}  // namespace
}  // namespace nlhjb

namespace Eigen::internal {
template <>
struct traits<nlhjb::ScaledPolicyMatrix> : public traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace nlhjb {
namespace {

class ScaledPolicyMatrix : public Eigen::EigenBase<ScaledPolicyMatrix> {
 public:
  using Scalar = double;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  ScaledPolicyMatrix(const DiscreteOperator& op, const std::vector<int>& policy,
                     const std::vector<double>& scale)
      : op_(op), policy_(policy), scale_(scale), in_(op.size()), out_(op.size()) {}

  Eigen::Index rows() const { return static_cast<Eigen::Index>(op_.size()); }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(op_.size()); }

  template <typename Rhs>
  Eigen::Product<ScaledPolicyMatrix, Rhs, Eigen::AliasFreeProduct> operator*(
      const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<ScaledPolicyMatrix, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }

  template <typename Rhs, typename Dest>
  void multiply_add(const Rhs& x, Dest& dst, double alpha) const {
    const std::size_t n = op_.size();
    for (std::size_t i = 0; i < n; ++i) in_[i] = x(static_cast<Eigen::Index>(i));
    op_.apply_policy_linear(policy_, in_, out_);
    for (std::size_t i = 0; i < n; ++i) dst(static_cast<Eigen::Index>(i)) += alpha * scale_[i] * out_[i];
  }

 private:
  const DiscreteOperator& op_;
  const std::vector<int>& policy_;
  const std::vector<double>& scale_;
  mutable std::vector<double> in_;
  mutable std::vector<double> out_;
};

// Exact factorization of the near-field part of the scaled frozen-policy
// matrix, used as a preconditioner for the full matrix.
class NearFieldPreconditioner {
 public:
  NearFieldPreconditioner() = default;

  template <typename M>
  NearFieldPreconditioner& analyzePattern(const M&) { return *this; }
  template <typename M>
  NearFieldPreconditioner& factorize(const M&) { return *this; }
  template <typename M>
  NearFieldPreconditioner& compute(const M&) { return *this; }

  void setup(const DiscreteOperator& op, const std::vector<int>& policy,
             const std::vector<double>& scale, int reach) {
    const auto t = op.near_field(policy, reach);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(t.value.size());
    for (std::size_t e = 0; e < t.value.size(); ++e)
      entries.emplace_back(static_cast<int>(t.row[e]), static_cast<int>(t.column[e]),
                           scale[t.row[e]] * t.value[e]);
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::SparseMatrix<double> P(n, n);
    P.setFromTriplets(entries.begin(), entries.end());
    P.makeCompressed();
    lu_.compute(P);
    ready_ = lu_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (!ready_) return b;
    return lu_.solve(b);
  }

  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool ready_ = false;
};

}  // namespace
}  // namespace nlhjb

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<nlhjb::ScaledPolicyMatrix, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<nlhjb::ScaledPolicyMatrix, Rhs,
                                generic_product_impl<nlhjb::ScaledPolicyMatrix, Rhs>> {
  using Scalar = typename Product<nlhjb::ScaledPolicyMatrix, Rhs>::Scalar;
  template <typename Dest>
  static void scaleAndAddTo(Dest& dst, const nlhjb::ScaledPolicyMatrix& lhs, const Rhs& rhs,
                            const Scalar& alpha) {
    lhs.multiply_add(rhs, dst, alpha);
  }
};
}  // namespace Eigen::internal

namespace nlhjb {
namespace {

double sup_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::optional<double> common_discount(const DiscreteOperator& op) {
  const double a = -op.zeroth(0, 0);
  for (std::size_t t = 0; t < op.controls(); ++t)
    for (std::size_t i = 0; i < op.size(); ++i)
      if (op.zeroth(t, i) != -a) return std::nullopt;
  if (!(a > 0.0)) return std::nullopt;
  return a;
}

struct LinearResult {
  int iterations = 0;
  double residual = 0.0;
};

// Solves the frozen-policy system in place until its sup-norm residual is
// below target, tightening the relative tolerance of BiCGSTAB as needed.
LinearResult solve_frozen(const DiscreteOperator& op, const std::vector<int>& policy,
                          std::vector<double>& w, double target, int max_iter) {
  const std::size_t n = op.size();
  std::vector<double> scale(n);
  Eigen::VectorXd rhs(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dg = op.diagonal(policy[i], i);
    if (!(dg < 0.0)) throw std::logic_error("discounted solver: frozen policy system is singular");
    scale[i] = 1.0 / -dg;
    rhs(i) = -scale[i] * op.constant(policy[i], i);
    x(i) = w[i];
  }
  ScaledPolicyMatrix A(op, policy, scale);
  Eigen::BiCGSTAB<ScaledPolicyMatrix, NearFieldPreconditioner> solver;
  solver.setMaxIterations(max_iter);
  solver.compute(A);
  solver.preconditioner().setup(op, policy, scale, 2);

  LinearResult out;
  auto residual = [&]() {
    const auto r = op.apply_policy(policy, w);
    return sup_norm(r);
  };
  out.residual = residual();
  double rel = 1e-8;
  for (int attempt = 0; attempt < 8 && out.residual > target; ++attempt) {
    solver.setTolerance(rel);
    x = solver.solveWithGuess(rhs, x);
    out.iterations += static_cast<int>(solver.iterations());
    for (std::size_t i = 0; i < n; ++i) w[i] = x(i);
    out.residual = residual();
    rel *= 1e-2;
    if (rel < 1e-16) rel = 1e-16;
  }
  return out;
}

}  // namespace

DiscountedSolution solve_policy_iteration(const DiscreteOperator& op, const SolverOptions& options,
                                          const std::vector<double>* initial_guess) {
  const std::size_t n = op.size();
  DiscountedSolution sol;
  sol.alpha = common_discount(op);

  std::vector<int> policy;
  std::vector<double> w(n, 0.0);
  if (initial_guess) {
    if (initial_guess->size() != n) throw std::invalid_argument("discounted solver: guess size mismatch");
    w = *initial_guess;
    op.apply_inf(w, &policy);
  } else {
    op.apply_inf(w, &policy);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = op.zeroth(policy[i], i);
      w[i] = c < 0.0 ? -op.constant(policy[i], i) / c : 0.0;
    }
    op.apply_inf(w, &policy);
  }

  const double switch_threshold = 1e-3 * options.tol;
  std::vector<double> previous;
  std::vector<int> candidate;
  for (int it = 1; it <= options.max_iter; ++it) {
    SweepRecord rec;
    rec.iteration = it;
    const auto lin = solve_frozen(op, policy, w, 0.1 * options.tol, options.linear_max_iter);
    rec.linear_iterations = lin.iterations;
    if (!previous.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        rec.monotone_violation = std::max(rec.monotone_violation, w[i] - previous[i]);
      sol.monotone_violation = std::max(sol.monotone_violation, rec.monotone_violation);
    }
    previous = w;

    const auto frozen = op.apply_policy(policy, w);
    const auto best = op.apply_inf(w, &candidate);
    int changes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (candidate[i] != policy[i] && frozen[i] - best[i] > switch_threshold) {
        policy[i] = candidate[i];
        ++changes;
      }
    }
    rec.policy_changes = changes;
    rec.residual = sup_norm(best);
    sol.trace.push_back(rec);
    sol.iterations = it;
    if (changes == 0 && rec.residual <= options.tol) {
      sol.converged = true;
      break;
    }
    if (changes == 0 && lin.residual > 0.1 * options.tol) break;  // linear solver stalled
  }

  sol.w = w;
  const auto r = op.apply_inf(sol.w, &sol.policy);
  sol.residual_inf_norm = sup_norm(r);
  sol.converged = sol.converged && sol.residual_inf_norm <= options.tol;
  if (!sol.converged && options.value_iteration_fallback) {
    auto fallback = solve_value_iteration(op, options, &sol.w);
    if (fallback.residual_inf_norm < sol.residual_inf_norm) {
      fallback.trace.insert(fallback.trace.begin(), sol.trace.begin(), sol.trace.end());
      fallback.monotone_violation = std::max(fallback.monotone_violation, sol.monotone_violation);
      return fallback;
    }
  }
  return sol;
}

DiscountedSolution solve_value_iteration(const DiscreteOperator& op, const SolverOptions& options,
                                         const std::vector<double>* initial_guess) {
  const std::size_t n = op.size();
  DiscountedSolution sol;
  sol.method = "value-iteration";
  sol.alpha = common_discount(op);
  std::vector<double> w = initial_guess ? *initial_guess : std::vector<double>(n, 0.0);
  std::vector<int> policy;
  for (int it = 1; it <= options.value_max_iter; ++it) {
    const auto r = op.apply_inf(w, &policy);
    const double res = sup_norm(r);
    sol.iterations = it;
    if (res <= options.tol) {
      sol.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) w[i] -= r[i] / op.diagonal(policy[i], i);
    if (it % 1000 == 0) sol.trace.push_back({it, res, 0, 0.0, 0});
  }
  sol.w = w;
  const auto r = op.apply_inf(sol.w, &sol.policy);
  sol.residual_inf_norm = sup_norm(r);
  sol.converged = sol.residual_inf_norm <= options.tol;
  return sol;
}

double zeroth_order_margin(const ControlProblem& p, const Grid& grid) {
  double sup_c = -std::numeric_limits<double>::infinity();
  for (const auto& c : p.controls)
    for (const auto& x : grid.nodes()) sup_c = std::max(sup_c, c.zeroth_at(x));
  if (!(sup_c < 0.0)) throw ProblemError("zeroth-order coefficient is not uniformly negative");
  return -sup_c;
}

BarrierReport check_barrier(const DiscountedSolution& sol, const ControlProblem& p, const Grid& grid) {
  if (!p.lyapunov) throw std::invalid_argument("check_barrier: problem has no Lyapunov data");
  BarrierReport rep;
  rep.k0 = p.lyapunov->k0;
  rep.c_circ = zeroth_order_margin(p, grid);
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double bound = rep.k0 / rep.c_circ + p.lyapunov->value(grid.node(i));
    const double margin = bound - std::abs(sol.w[i]);
    if (margin < rep.min_margin) {
      rep.min_margin = margin;
      rep.worst_node = i;
    }
    if (margin < 0.0) rep.violations.push_back({i, sol.w[i], bound});
  }
  rep.passed = rep.violations.empty();
  return rep;
}

BarrierReport check_sup_bound(const DiscountedSolution& sol, const ControlProblem& p, const Grid& grid) {
  BarrierReport rep;
  rep.c_circ = zeroth_order_margin(p, grid);
  double sup_g = 0.0;
  for (const auto& c : p.controls)
    for (const auto& x : grid.nodes()) sup_g = std::max(sup_g, std::abs(c.cost_at(x)));
  rep.k0 = sup_g;
  const double bound = sup_g / rep.c_circ;
  rep.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double margin = bound - std::abs(sol.w[i]);
    if (margin < rep.min_margin) {
      rep.min_margin = margin;
      rep.worst_node = i;
    }
    if (margin < 0.0) rep.violations.push_back({i, sol.w[i], bound});
  }
  rep.passed = rep.violations.empty();
  return rep;
}

}  // namespace nlhjb
