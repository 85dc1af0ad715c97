#include "nlhjb/ergodic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nlhjb/lyapunov.hpp"

namespace nlhjb {

double ExpansionOptions::far_radius(double R) const {
  return fixed_far_radius > 0.0 ? fixed_far_radius : std::max(R + 1.0, far_scale * R);
}

ExpansionWorkspace::ExpansionWorkspace(ControlProblem problem, ExpansionOptions options)
    : problem_(std::move(problem)), options_(std::move(options)) {
  const auto& r = options_.radii;
  if (r.empty()) throw std::invalid_argument("expand_domain: empty radius schedule");
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!(r[k] >= 4.0 * options_.spacing))
      throw std::invalid_argument("expand_domain: radius " + std::to_string(r[k]) + " below 4 * spacing");
    if (k > 0 && !(r[k] > r[k - 1]))
      throw std::invalid_argument("expand_domain: radius schedule must be strictly increasing");
  }
  if (!(options_.inner() <= r.front()))
    throw std::invalid_argument("expand_domain: inner window larger than the first radius");
  cache_.resize(r.size());
}

ExpansionWorkspace::Level& ExpansionWorkspace::level(std::size_t k) {
  if (k >= cache_.size()) throw std::out_of_range("expansion workspace: level out of range");
  if (!cache_[k]) {
    const double R = options_.radii[k];
    Grid g = Grid::build(problem_.dimension, options_.spacing, R);
    JumpQuadrature q = build_quadrature(g, problem_.kernel.s, options_.far_radius(R), options_.tail);
    DiscreteOperator op = assemble(problem_, g, q, options_.exterior);
    cache_[k] = std::make_unique<Level>(Level{std::move(g), std::move(q), std::move(op), std::nullopt});
  }
  return *cache_[k];
}

double ExpansionWorkspace::lyapunov_k0(std::size_t k) {
  Level& L = level(k);
  if (!L.lyapunov_k0) L.lyapunov_k0 = barrier_constant(problem_, L.grid, L.quadrature, false);
  return *L.lyapunov_k0;
}

std::vector<double> transfer(const Grid& from, const std::vector<double>& values, const Grid& to) {
  std::vector<double> out(to.size());
  for (std::size_t i = 0; i < to.size(); ++i) {
    if (auto j = from.index_of(to.lattice(i)))
      out[i] = values[*j];
    else
      out[i] = values[from.nearest_index(to.node(i))];
  }
  return out;
}

double inner_difference(const Grid& a, const std::vector<double>& va, const Grid& b,
                        const std::vector<double>& vb, double radius) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (norm(a.node(i)) > radius * (1.0 + 1e-12)) continue;
    auto j = b.index_of(a.lattice(i));
    if (!j) throw std::invalid_argument("inner_difference: window node missing from the second grid");
    d = std::max(d, std::abs(va[i] - vb[*j]));
  }
  return d;
}

namespace {

std::vector<double> normalized(const std::vector<double>& w, std::size_t origin) {
  std::vector<double> out(w);
  const double w0 = w[origin];
  for (double& v : out) v -= w0;
  return out;
}

double inner_residual(const DiscreteOperator& op, const std::vector<double>& u, double lambda,
                      double radius) {
  const auto r = op.apply_inf(u);
  const Grid& g = op.grid();
  double res = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (norm(g.node(i)) <= radius * (1.0 + 1e-12)) res = std::max(res, std::abs(r[i] - lambda));
  return res;
}

}  // namespace

ExpansionResult expand_domain(ExpansionWorkspace& ws, double alpha,
                              const std::vector<std::vector<double>>* warm) {
  if (!(alpha > 0.0)) throw std::invalid_argument("expand_domain: alpha must be positive");
  const ExpansionOptions& opt = ws.options();
  const double window = opt.inner();
  ExpansionResult res;

  for (std::size_t k = 0; k < ws.levels(); ++k) {
    auto& L = ws.level(k);
    const DiscreteOperator op = L.op.with_discount(alpha);

    std::vector<double> guess;
    if (warm && k < warm->size() && (*warm)[k].size() == L.grid.size())
      guess = (*warm)[k];
    else if (k > 0)
      guess = transfer(ws.level(k - 1).grid, res.level_solutions.back(), L.grid);
    // With the boundary rule constants are exact, so the solve runs on
    // w - C with C the warm-start value at the origin. This keeps the
    // iterate O(1) when w itself is of size lambda / alpha.
    double C = 0.0;
    if (opt.exterior.kind() == ExteriorRule::Kind::Boundary && !guess.empty()) {
      C = guess[L.grid.origin_index()];
      for (double& v : guess) v -= C;
    }
    DiscountedSolution sol = solve_policy_iteration(C == 0.0 ? op : op.with_constant_shift(-alpha * C),
                                                    opt.solver, guess.empty() ? nullptr : &guess);
    for (double& v : sol.w) v += C;

    DomainLevel rec;
    rec.radius = opt.radii[k];
    rec.nodes = L.grid.size();
    rec.residual = sol.residual_inf_norm;
    rec.iterations = sol.iterations;
    rec.converged = sol.converged;

    if (k > 0) {
      const Grid& prev = ws.level(k - 1).grid;
      const auto& wp = res.level_solutions.back();
      double change;
      if (opt.normalized) {
        change = inner_difference(prev, normalized(wp, prev.origin_index()), L.grid,
                                  normalized(sol.w, L.grid.origin_index()), window);
        change = std::max(change, alpha * std::abs(wp[prev.origin_index()] - sol.w[L.grid.origin_index()]));
      } else {
        change = inner_difference(prev, wp, L.grid, sol.w, window);
      }
      rec.inner_change = change;
      res.last_change = change;
    }
    res.trace.push_back(rec);
    res.level_solutions.push_back(sol.w);
    res.solution = std::move(sol);
    res.level = k;
    if (rec.inner_change && *rec.inner_change <= opt.tol) {
      res.stabilized = true;
      break;
    }
  }
  return res;
}

ExpansionResult expand_domain(const ControlProblem& p, double alpha, const ExpansionOptions& options) {
  ExpansionWorkspace ws(p, options);
  return expand_domain(ws, alpha);
}

std::vector<double> ErgodicOptions::schedule() const {
  std::vector<double> a = alphas;
  if (a.empty()) {
    if (!(alpha_start > 0.0 && alpha_start < 1.0) || !(alpha_ratio > 0.0 && alpha_ratio < 1.0) ||
        !(min_alpha > 0.0))
      throw std::invalid_argument("vanishing_discount: invalid geometric schedule");
    for (double x = alpha_start; x >= min_alpha * (1.0 - 1e-12); x *= alpha_ratio) a.push_back(x);
  }
  if (a.empty()) throw std::invalid_argument("vanishing_discount: empty alpha schedule");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k] > 0.0 && a[k] < 1.0))
      throw std::invalid_argument("vanishing_discount: alpha outside (0, 1)");
    if (k > 0 && !(a[k] < a[k - 1]))
      throw std::invalid_argument("vanishing_discount: alpha schedule must be strictly decreasing");
  }
  return a;
}

ErgodicSolution vanishing_discount(ExpansionWorkspace& ws, const ErgodicOptions& options) {
  const auto alphas = options.schedule();
  const ControlProblem& p = ws.problem();
  const double window = ws.options().inner();

  ErgodicSolution out;
  out.inner_radius = window;

  // Per radius: normalized potential and alpha w(origin) from the last alpha solved there.
  std::vector<std::vector<double>> prev_bar(ws.levels());
  std::vector<double> prev_lambda(ws.levels(), 0.0);
  std::vector<double> last_bar;
  std::size_t last_level = 0;

  for (double alpha : alphas) {
    std::vector<std::vector<double>> warm(ws.levels());
    for (std::size_t k = 0; k < ws.levels(); ++k) {
      if (prev_bar[k].empty()) continue;
      warm[k] = prev_bar[k];
      for (double& v : warm[k]) v += prev_lambda[k] / alpha;
    }
    ExpansionResult ex = expand_domain(ws, alpha, &warm);
    for (std::size_t k = 0; k < ex.level_solutions.size(); ++k) {
      const std::size_t o = ws.level(k).grid.origin_index();
      prev_bar[k] = normalized(ex.level_solutions[k], o);
      prev_lambda[k] = alpha * ex.level_solutions[k][o];
    }

    auto& L = ws.level(ex.level);
    const std::size_t origin = L.grid.origin_index();
    AlphaRecord rec;
    rec.alpha = alpha;
    rec.w_origin = ex.solution.w[origin];
    rec.lambda = alpha * rec.w_origin;
    rec.radius = ws.options().radii[ex.level];
    rec.domain_stabilized = ex.stabilized;
    rec.solver_converged = ex.solution.converged;
    rec.domain_trace = ex.trace;
    std::vector<double> bar = normalized(ex.solution.w, origin);
    rec.ergodic_residual = inner_residual(L.op, bar, rec.lambda, window);
    if (!out.alpha_trace.empty()) {
      rec.lambda_change = std::abs(rec.lambda - out.alpha_trace.back().lambda);
      rec.potential_change = inner_difference(ws.level(last_level).grid, last_bar, L.grid, bar, window);
    }
    if (p.lyapunov && p.lyapunov->value) {
      rec.lyapunov_k0 = ws.lyapunov_k0(ex.level);
      rec.lambda_bound = *rec.lyapunov_k0 + alpha * p.lyapunov->value(L.grid.node(origin));
      rec.lambda_bound_ok = std::abs(rec.lambda) <= *rec.lambda_bound * (1.0 + 1e-12) + 1e-12;
    }
    out.alpha_trace.push_back(rec);
    out.snapshots.push_back(Snapshot{alpha, ex.level, bar});

    last_bar = std::move(bar);
    last_level = ex.level;
    if (rec.lambda_change && *rec.lambda_change <= options.tol && *rec.potential_change <= options.tol &&
        rec.ergodic_residual <= options.tol) {
      out.converged = true;
      break;
    }
  }

  const auto& L = ws.level(last_level);
  out.grid = L.grid;
  out.level = last_level;
  out.u = normalized(last_bar, L.grid.origin_index());
  out.lambda_star = out.alpha_trace.back().lambda;
  out.ergodic_residual = inner_residual(L.op, out.u, out.lambda_star, window);
  if (p.lyapunov && p.lyapunov->value)
    out.growth = growth_report(L.grid, out.u, *p.lyapunov, options.growth_rays);
  return out;
}

ErgodicSolution vanishing_discount(const ControlProblem& p, const ErgodicOptions& options) {
  ExpansionWorkspace ws(p, options.expansion);
  return vanishing_discount(ws, options);
}

GrowthReport growth_report(const Grid& grid, const std::vector<double>& u, const LyapunovData& lyap,
                           int rays) {
  GrowthReport rep;
  std::vector<Point> dirs;
  if (grid.dimension() == 1) {
    dirs = {{1.0, 0.0}, {-1.0, 0.0}};
  } else {
    const int n = std::max(rays, 1);
    for (int j = 0; j < n; ++j) {
      const double t = 2.0 * std::numbers::pi * j / n;
      dirs.push_back({std::cos(t), std::sin(t)});
    }
  }
  constexpr int kSamples = 8;
  constexpr int kOutermost = 3;
  for (std::size_t r = 0; r < dirs.size(); ++r) {
    std::vector<double> ratios;
    for (int m = 1; m <= kSamples; ++m) {
      const std::size_t i = grid.nearest_index((grid.radius() * m / kSamples) * dirs[r]);
      const double ratio = std::abs(u[i]) / (1.0 + lyap.value(grid.node(i)));
      rep.samples.push_back({r, norm(grid.node(i)), ratio});
      ratios.push_back(ratio);
    }
    for (int m = kSamples - kOutermost + 1; m < kSamples; ++m)
      if (ratios[m] > ratios[m - 1] * (1.0 + 1e-12) + 1e-15) rep.nonincreasing = false;
  }
  return rep;
}

BarWReport check_bar_w_bound(const std::vector<std::pair<const Grid*, const std::vector<double>*>>& trace,
                             const std::vector<double>& alphas, const LyapunovData& lyap,
                             double ball_radius) {
  if (trace.size() < 2) throw std::invalid_argument("check_bar_w_bound: needs at least two alpha levels");
  if (!lyap.value) throw std::invalid_argument("check_bar_w_bound: Lyapunov function missing");
  BarWReport rep;
  rep.ball_radius = ball_radius;
  std::vector<double> maxima;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const Grid& g = *trace[k].first;
    const auto& w = *trace[k].second;
    BarWLevel lv;
    lv.alpha = k < alphas.size() ? alphas[k] : 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (norm(g.node(i)) <= ball_radius * (1.0 + 1e-12)) lv.max_on_ball = std::max(lv.max_on_ball, std::abs(w[i]));
    lv.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double margin = lv.max_on_ball + lyap.value(g.node(i)) - std::abs(w[i]);
      lv.min_margin = std::min(lv.min_margin, margin);
      if (margin < -1e-12 * (1.0 + std::abs(w[i]))) ++lv.violations;
    }
    if (lv.violations > 0) rep.passed = false;
    maxima.push_back(lv.max_on_ball);
    rep.levels.push_back(lv);
  }
  std::vector<double> sorted = maxima;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  rep.bounded = maxima.back() <= 2.0 * median + 1e-12;
  if (!rep.bounded) rep.passed = false;
  return rep;
}

BarWReport check_bar_w_bound(const std::vector<Snapshot>& trace, ExpansionWorkspace& ws,
                             double ball_radius) {
  if (!ws.problem().lyapunov) throw std::invalid_argument("check_bar_w_bound: Lyapunov data missing");
  std::vector<std::pair<const Grid*, const std::vector<double>*>> t;
  std::vector<double> alphas;
  for (const auto& s : trace) {
    t.emplace_back(&ws.level(s.level).grid, &s.w_bar);
    alphas.push_back(s.alpha);
  }
  return check_bar_w_bound(t, alphas, *ws.problem().lyapunov, ball_radius);
}

PairReport verify_ergodic_pair(const std::vector<double>& u, double lambda, const DiscreteOperator& op,
                               double inner_radius, double tol) {
  PairReport rep;
  rep.normalized = u.at(op.grid().origin_index()) == 0.0;
  rep.residual = inner_residual(op, u, lambda, inner_radius);
  rep.residual_ok = rep.normalized && rep.residual <= tol;
  return rep;
}

PairReport uniqueness_probe(const ErgodicSolution& reference, ExpansionWorkspace& ws,
                            const ErgodicOptions& alternate) {
  if (!reference.grid) throw std::invalid_argument("uniqueness_probe: reference has no grid");
  const ErgodicSolution alt = vanishing_discount(ws, alternate);
  PairReport rep;
  rep.normalized = true;
  rep.lambda_difference = std::abs(alt.lambda_star - reference.lambda_star);
  rep.potential_difference =
      inner_difference(*reference.grid, reference.u, *alt.grid, alt.u, reference.inner_radius);
  rep.unique_ok = *rep.lambda_difference <= 5.0 * alternate.tol && *rep.potential_difference <= 5.0 * alternate.tol;
  return rep;
}

PairReport verify_ergodic_pair(const ErgodicSolution& solution, ExpansionWorkspace& ws,
                               const ErgodicOptions& options, const std::optional<ErgodicOptions>& alternate) {
  if (!solution.grid) throw std::invalid_argument("verify_ergodic_pair: solution has no grid");
  PairReport rep = verify_ergodic_pair(solution.u, solution.lambda_star, ws.level(solution.level).op,
                                       solution.inner_radius, options.tol);
  ErgodicOptions alt = alternate.value_or(options);
  if (!alternate) {
    alt.alphas.clear();
    alt.alpha_start = 0.4;
  }
  const PairReport probe = uniqueness_probe(solution, ws, alt);
  rep.lambda_difference = probe.lambda_difference;
  rep.potential_difference = probe.potential_difference;
  rep.unique_ok = probe.unique_ok;
  return rep;
}

}  // namespace nlhjb
