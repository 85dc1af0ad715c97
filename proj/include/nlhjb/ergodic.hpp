#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlhjb/discounted.hpp"
#include "nlhjb/grid.hpp"
#include "nlhjb/operator.hpp"
#include "nlhjb/problem.hpp"
#include "nlhjb/quadrature.hpp"

namespace nlhjb {

struct ExpansionOptions {
  double spacing = 0.25;
  std::vector<double> radii{8.0, 16.0};
  /// Far radius of each grid: max(R + 1, far_scale * R).
  double far_scale = 2.0;
  double fixed_far_radius = 0.0;  // > 0: this far radius on every level
  double tol = 1e-6;
  double inner_radius = 0.0;  // 0: first radius / 4
  ExteriorRule exterior = ExteriorRule::zero();
  /// Compare w - w(origin) and alpha w(origin) between radii instead of w.
  bool normalized = false;
  SolverOptions solver;
  TailOptions tail;

  double inner() const { return inner_radius > 0.0 ? inner_radius : radii.front() / 4.0; }
  double far_radius(double R) const;
};

struct DomainLevel {
  double radius = 0.0;
  std::size_t nodes = 0;
  std::optional<double> inner_change;  // against the previous radius
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Grids, quadratures and undiscounted operators per radius, built on first use.
class ExpansionWorkspace {
 public:
  ExpansionWorkspace(ControlProblem problem, ExpansionOptions options);

  struct Level {
    Grid grid;
    JumpQuadrature quadrature;
    DiscreteOperator op;
    std::optional<double> lyapunov_k0;
  };

  const ControlProblem& problem() const { return problem_; }
  const ExpansionOptions& options() const { return options_; }
  std::size_t levels() const { return options_.radii.size(); }
  Level& level(std::size_t k);
  /// Constant of the Lyapunov bound |w_alpha| <= k0 / alpha + V on level k.
  double lyapunov_k0(std::size_t k);

 private:
  ControlProblem problem_;
  ExpansionOptions options_;
  std::vector<std::unique_ptr<Level>> cache_;
};

struct ExpansionResult {
  DiscountedSolution solution;
  std::size_t level = 0;  // index of the radius holding the solution
  std::vector<DomainLevel> trace;
  std::vector<std::vector<double>> level_solutions;  // w on every radius solved
  bool stabilized = false;
  double last_change = 0.0;
};

/// Values on `to` taken from `from` at shared lattice points and from the
/// nearest node of `from` elsewhere.
std::vector<double> transfer(const Grid& from, const std::vector<double>& values, const Grid& to);

/// Sup over nodes of `a` with |x| <= radius of |va - vb|, matching nodes by lattice index.
double inner_difference(const Grid& a, const std::vector<double>& va, const Grid& b,
                        const std::vector<double>& vb, double radius);

/// Solves the problem with c_tau == -alpha on every radius of the schedule in
/// turn, warm-starting each from the previous one, until the inner window
/// changes by at most tol. Non-stabilization is flagged, not thrown.
ExpansionResult expand_domain(ExpansionWorkspace& ws, double alpha,
                              const std::vector<std::vector<double>>* warm = nullptr);
ExpansionResult expand_domain(const ControlProblem& p, double alpha, const ExpansionOptions& options);

struct ErgodicOptions {
  ExpansionOptions expansion = [] {
    ExpansionOptions e;
    e.exterior = ExteriorRule::boundary();
    e.normalized = true;
    return e;
  }();
  std::vector<double> alphas;  // empty: 0.5 * 2^-k down to min_alpha
  double alpha_start = 0.5;
  double alpha_ratio = 0.5;
  double min_alpha = 1e-7;
  double tol = 1e-6;
  double bar_w_ball = 0.0;  // 0: the inner window
  int growth_rays = 8;      // two-dimensional problems only

  std::vector<double> schedule() const;
};

struct AlphaRecord {
  double alpha = 0.0;
  double lambda = 0.0;
  std::optional<double> lambda_change;
  std::optional<double> potential_change;  // inner window, normalized potentials
  double ergodic_residual = 0.0;           // inner window, undiscounted operator
  double radius = 0.0;
  bool domain_stabilized = false;
  bool solver_converged = false;
  double w_origin = 0.0;
  std::optional<double> lyapunov_k0;
  std::optional<double> lambda_bound;  // k0 + alpha V(origin)
  bool lambda_bound_ok = true;
  std::vector<DomainLevel> domain_trace;
};

struct Snapshot {
  double alpha = 0.0;
  std::size_t level = 0;
  std::vector<double> w_bar;
};

struct GrowthSample {
  std::size_t ray = 0;
  double radius = 0.0;
  double ratio = 0.0;  // |u| / (1 + V)
};

struct GrowthReport {
  std::vector<GrowthSample> samples;
  bool nonincreasing = true;  // over the outermost samples of every ray
  std::string note = "sampled proxy for growth slower than V";
};

struct ErgodicSolution {
  std::optional<Grid> grid;
  std::size_t level = 0;
  std::vector<double> u;
  double lambda_star = 0.0;
  bool converged = false;
  double inner_radius = 0.0;
  double ergodic_residual = 0.0;
  std::vector<AlphaRecord> alpha_trace;
  std::vector<Snapshot> snapshots;
  GrowthReport growth;
};

/// Vanishing discount: for each alpha, expand the domain, normalize
/// w_bar = w - w(origin) and record lambda_alpha = alpha w(origin). Stops when
/// lambda and w_bar (inner window) both change by at most tol between levels
/// and the ergodic residual on the inner window is at most tol.
ErgodicSolution vanishing_discount(ExpansionWorkspace& ws, const ErgodicOptions& options);
ErgodicSolution vanishing_discount(const ControlProblem& p, const ErgodicOptions& options);

GrowthReport growth_report(const Grid& grid, const std::vector<double>& u, const LyapunovData& lyap,
                           int rays);

struct BarWLevel {
  double alpha = 0.0;
  double max_on_ball = 0.0;
  double min_margin = 0.0;
  std::size_t violations = 0;
};

struct BarWReport {
  bool passed = true;
  bool bounded = true;  // last max_B |w_bar| <= 2 * median
  double ball_radius = 0.0;
  std::vector<BarWLevel> levels;
};

/// |w_bar_alpha| <= max_B |w_bar_alpha| + V at every node, per alpha, and
/// boundedness of max_B |w_bar_alpha| along the trace.
BarWReport check_bar_w_bound(const std::vector<Snapshot>& trace, ExpansionWorkspace& ws,
                             double ball_radius);
BarWReport check_bar_w_bound(const std::vector<std::pair<const Grid*, const std::vector<double>*>>& trace,
                             const std::vector<double>& alphas, const LyapunovData& lyap,
                             double ball_radius);

struct PairReport {
  double residual = 0.0;  // inner window sup of |inf_tau(L_tau u + g_tau) - lambda|
  bool residual_ok = false;
  bool normalized = false;
  std::optional<double> lambda_difference;
  std::optional<double> potential_difference;
  bool unique_ok = true;
};

/// Ergodic residual of (u, lambda) on the inner window against tol.
PairReport verify_ergodic_pair(const std::vector<double>& u, double lambda, const DiscreteOperator& op,
                               double inner_radius, double tol);

/// Residual check of a driver result plus the uniqueness probe against the
/// schedule 0.4 * 2^-k (or `alternate` when given).
PairReport verify_ergodic_pair(const ErgodicSolution& solution, ExpansionWorkspace& ws,
                               const ErgodicOptions& options,
                               const std::optional<ErgodicOptions>& alternate = std::nullopt);

/// Re-runs the driver with another discount schedule and compares the pairs
/// within 5 tol on the inner window.
PairReport uniqueness_probe(const ErgodicSolution& reference, ExpansionWorkspace& ws,
                            const ErgodicOptions& alternate);

}  // namespace nlhjb
