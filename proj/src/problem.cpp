#include "nlhjb/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace nlhjb {

double LyapunovData::envelope_exponent() const {
  if (!gamma || !theta) throw ProblemError("lyapunov: envelope exponent needs gamma and theta");
  return *theta + *gamma - 1.0;
}

std::size_t ControlProblem::control_index(std::string_view label) const {
  for (std::size_t i = 0; i < controls.size(); ++i)
    if (controls[i].label == label) return i;
  throw std::out_of_range("problem: no control labelled '" + std::string(label) + "'");
}

ControlProblem with_discount(const ControlProblem& p, double alpha) {
  if (!(alpha > 0.0)) throw ProblemError("discount must be positive");
  ControlProblem q = p;
  for (auto& c : q.controls) c.zeroth = [alpha](const Point&) { return -alpha; };
  q.discount = alpha;
  return q;
}

ControlProblem with_cost_shift(const ControlProblem& p, double kappa) {
  ControlProblem q = p;
  for (auto& c : q.controls) {
    ScalarField g = c.cost;
    c.cost = [g, kappa](const Point& x) { return (g ? g(x) : 0.0) + kappa; };
  }
  return q;
}

ControlProblem with_cost_scale(const ControlProblem& p, double factor) {
  ControlProblem q = p;
  for (auto& c : q.controls) {
    ScalarField g = c.cost;
    c.cost = [g, factor](const Point& x) { return g ? factor * g(x) : 0.0; };
  }
  return q;
}

LyapunovData power_lyapunov(double gamma) {
  if (!(gamma > 0.0)) throw ProblemError("lyapunov: gamma must be positive");
  const double c4 = gamma * (gamma - 2.0) / 8.0;
  const double c2 = gamma / 2.0 - 2.0 * c4;
  const double c0 = 1.0 - c2 - c4;

  LyapunovData v;
  v.gamma = gamma;
  v.value = [=](const Point& x) {
    const double r = norm(x);
    if (r >= 1.0) return std::pow(r, gamma);
    const double r2 = r * r;
    return c0 + c2 * r2 + c4 * r2 * r2;
  };
  v.gradient = [=](const Point& x) -> Point {
    const double r = norm(x);
    const double f = r >= 1.0 ? gamma * std::pow(r, gamma - 2.0) : 2.0 * c2 + 4.0 * c4 * r * r;
    return f * x;
  };
  v.hessian = [=](const Point& x) -> Matrix2 {
    const double r = norm(x);
    if (r >= 1.0) {
      const double f = gamma * std::pow(r, gamma - 2.0);
      const double g = f * (gamma - 2.0) / (r * r);
      return {f + g * x[0] * x[0], g * x[0] * x[1], g * x[0] * x[1], f + g * x[1] * x[1]};
    }
    const double f = 2.0 * c2 + 4.0 * c4 * r * r;
    return {f + 8.0 * c4 * x[0] * x[0], 8.0 * c4 * x[0] * x[1], 8.0 * c4 * x[0] * x[1],
            f + 8.0 * c4 * x[1] * x[1]};
  };
  return v;
}

namespace {

void require_order(double s) {
  if (!(s > 0.5 && s < 1.0)) throw ProblemError("fractional order s must lie in (1/2, 1)");
}

void require_dimension(int d) {
  if (d != 1 && d != 2) throw ProblemError("dimension must be 1 or 2");
}

// -c x |x|^{theta-1}, zero at the origin.
VectorField inward_drift(double strength, double theta) {
  return [=](const Point& x) -> Point {
    const double r = norm(x);
    if (r == 0.0) return {0.0, 0.0};
    return (-strength * std::pow(r, theta - 1.0)) * x;
  };
}

}  // namespace

ControlProblem power_drift_problem(double gamma, double theta, int dimension, double s,
                                   const ExampleOptions& options) {
  require_order(s);
  require_dimension(dimension);
  std::ostringstream why;
  if (!(gamma > s + 0.5)) {
    why << "gamma > s + 1/2 violated: " << gamma << " <= " << s + 0.5;
  } else if (!(gamma < 2.0 * s)) {
    why << "gamma < 2s violated: " << gamma << " >= " << 2.0 * s;
  } else if (!(theta >= 0.0)) {
    why << "theta >= 0 violated: " << theta;
  } else if (!(theta + gamma - 1.0 > 0.0)) {
    why << "theta + gamma - 1 > 0 violated";
  } else if (!(theta < (2.0 * s - gamma) * (2.0 * s - 1.0))) {
    why << "theta < (2s - gamma)(2s - 1) violated: " << theta
        << " >= " << (2.0 * s - gamma) * (2.0 * s - 1.0);
  }
  if (!why.str().empty()) throw ProblemError("power_drift_problem: " + why.str());
  if (!(options.lambda > 0.0 && options.Lambda >= options.lambda))
    throw ProblemError("power_drift_problem: need 0 < lambda <= Lambda");

  const double p = theta + gamma - 1.0;
  const double growth_cap = 2.0 * s * theta / (2.0 * s - 1.0);
  const double beta = options.cost_exponent.value_or(0.5 * std::min(p, growth_cap));
  if (!(beta >= 0.0 && beta < p))
    throw ProblemError("power_drift_problem: cost exponent must lie in [0, theta + gamma - 1)");

  ControlProblem prob;
  prob.family = "example";
  prob.dimension = dimension;
  prob.kernel = {s, options.lambda, options.Lambda, true};
  prob.parameters = {{"gamma", gamma}, {"theta", theta}, {"s", s},
                     {"cost_exponent", beta}, {"effort_cost", options.effort_cost},
                     {"drift_sign", options.outward_drift ? 1.0 : -1.0}};

  const double k_low = (2.0 - 2.0 * s) * options.lambda;
  const double k_high = (2.0 - 2.0 * s) * options.Lambda;
  auto state_cost = [beta](const Point& x) { return std::pow(1.0 + dot(x, x), 0.5 * beta); };

  Control gentle;
  gentle.label = "gentle";
  gentle.kernel = [k_low](const Point&, const Point&) { return k_low; };
  gentle.kernel_translation_invariant = true;
  const double sign = options.outward_drift ? -1.0 : 1.0;
  gentle.drift = inward_drift(sign * 1.0, theta);
  gentle.cost = state_cost;

  Control strong;
  strong.label = "strong";
  strong.kernel = [k_high](const Point&, const Point&) { return k_high; };
  strong.kernel_translation_invariant = true;
  strong.drift = inward_drift(sign * 2.0, theta);
  const double effort = options.effort_cost;
  strong.cost = [state_cost, effort](const Point& x) { return state_cost(x) + effort; };

  prob.controls = {gentle, strong};

  LyapunovData lyap = power_lyapunov(gamma);
  lyap.theta = theta;
  lyap.mu = theta / (gamma * (2.0 * s - 1.0));
  lyap.h = [p](const Point& x) { return std::pow(norm(x), p); };
  prob.lyapunov = lyap;
  return prob;
}

ControlProblem constant_cost_problem(double kappa, int dimension, double s) {
  require_order(s);
  require_dimension(dimension);
  ControlProblem prob;
  prob.family = "constant_cost";
  prob.dimension = dimension;
  prob.kernel = {s, 1.0, 1.5, true};
  prob.parameters = {{"kappa", kappa}, {"s", s}};
  const double k1 = 2.0 - 2.0 * s;
  const double k2 = 1.5 * (2.0 - 2.0 * s);
  auto cost = [kappa](const Point&) { return kappa; };

  Control a;
  a.label = "slow";
  a.kernel = [k1](const Point&, const Point&) { return k1; };
  a.kernel_translation_invariant = true;
  a.drift = [](const Point& x) { return -0.5 * x; };
  a.cost = cost;
  Control b;
  b.label = "fast";
  b.kernel = [k2](const Point&, const Point&) { return k2; };
  b.kernel_translation_invariant = true;
  b.drift = [](const Point& x) { return -1.0 * x; };
  b.cost = cost;
  prob.controls = {a, b};
  return prob;
}

ControlProblem mixed_constant_cost_problem(double kappa, int dimension) {
  require_dimension(dimension);
  ControlProblem prob;
  prob.family = "mixed_constant_cost";
  prob.dimension = dimension;
  prob.kernel = {0.75, 1.0, 1.0, false};
  prob.parameters = {{"kappa", kappa}};
  MixedSpec mixed;
  mixed.majorant = [](const Point&) { return 0.0; };
  prob.mixed = mixed;

  Control c;
  c.label = "identity";
  c.diffusion = [](const Point&) -> Matrix2 { return {1.0, 0.0, 0.0, 1.0}; };
  c.drift = [](const Point& x) { return -1.0 * x; };
  c.cost = [kappa](const Point&) { return kappa; };
  prob.controls = {c};
  return prob;
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

CheckResult named(std::string name) {
  CheckResult r;
  r.name = std::move(name);
  return r;
}

template <class T>
std::vector<T> thin(std::span<const T> items, std::size_t cap) {
  std::vector<T> out;
  if (items.empty()) return out;
  const std::size_t stride = std::max<std::size_t>(1, (items.size() + cap - 1) / cap);
  for (std::size_t i = 0; i < items.size(); i += stride) out.push_back(items[i]);
  return out;
}

void require_finite(double v, const char* what, const Control& c, const Point& x) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "problem: non-finite " << what << " for control '" << c.label << "' at x=(" << x[0]
       << ", " << x[1] << ")";
    throw ProblemError(os.str());
  }
}

// Ratio sup over the outer half of the sampled nodes against the inner half;
// growth beyond the slack means the sampled ratio is not bounded.
constexpr double kGrowthSlack = 2.0;

struct RatioTracker {
  std::string name;
  double inner = 0.0;
  double outer = 0.0;
  double worst = 0.0;
  Point witness{0.0, 0.0};
  bool finite = true;

  void add(double value, const Point& x, bool is_outer) {
    if (!std::isfinite(value)) finite = false;
    (is_outer ? outer : inner) = std::max(is_outer ? outer : inner, value);
    if (value > worst) {
      worst = value;
      witness = x;
    }
  }

  CheckResult result() const {
    CheckResult r;
    r.name = name;
    r.proxy = true;
    r.worst = worst;
    r.witness = witness;
    r.passed = finite && outer <= kGrowthSlack * std::max(inner, 1e-300);
    std::ostringstream os;
    os << "sup inner half " << inner << ", sup outer half " << outer;
    r.detail = os.str();
    return r;
  }
};

// Integral of f(r) r^{d-1} over [a, b] by composite Simpson.
double radial_integral(const std::function<double(double)>& f, int d, double a, double b) {
  const int n = 256;
  const double h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f(r) * (d == 2 ? r : 1.0);
  }
  return acc * h / 3.0 * (d == 2 ? 2.0 * M_PI : 2.0);
}

// Integrability over R^d of a radial profile, judged by dyadic shells: the
// shell masses must eventually shrink geometrically.
CheckResult shell_integrability(const std::string& name, const std::function<double(double)>& f,
                                int d) {
  CheckResult r;
  r.name = name;
  r.proxy = true;
  double previous = radial_integral(f, d, 0.0, 1.0);
  double total = previous;
  double ratio = 0.0;
  for (int k = 0; k < 40; ++k) {
    const double a = std::ldexp(1.0, k);
    const double shell = radial_integral(f, d, a, 2.0 * a);
    if (previous > 0.0) ratio = shell / previous;
    total += shell;
    previous = shell;
  }
  r.worst = ratio;
  r.passed = std::isfinite(total) && ratio < 1.0;
  std::ostringstream os;
  os << "mass up to radius 2^40: " << total << ", last dyadic shell ratio " << ratio;
  r.detail = os.str();
  return r;
}

}  // namespace

ValidationReport validate_problem(const ControlProblem& p, const Grid& grid,
                                  std::span<const Point> offsets) {
  if (p.controls.empty()) throw ProblemError("problem: control set is empty");
  if (p.dimension != grid.dimension()) throw ProblemError("problem: dimension differs from grid");
  if (offsets.empty()) throw ProblemError("problem: empty offset set");

  ValidationReport report;
  const auto nodes = thin<Point>(grid.nodes(), 400);
  const auto ys = thin<Point>(offsets, 256);
  const double s = p.kernel.s;
  const double half_radius = 0.5 * grid.radius();

  for (const auto& c : p.controls) {
    for (const auto& x : nodes) {
      require_finite(c.cost_at(x), "cost", c, x);
      require_finite(c.zeroth_at(x), "zeroth-order coefficient", c, x);
      const Point b = c.drift_at(x);
      require_finite(b[0], "drift", c, x);
      require_finite(b[1], "drift", c, x);
    }
  }

  if (p.kernel.enabled) {
    if (!(s > 0.5 && s < 1.0)) throw ProblemError("problem: fractional order outside (1/2, 1)");
    CheckResult sym = named("kernel_symmetry");
    CheckResult bounds = named("kernel_bounds");
    const double lo = p.kernel.lower_bound();
    const double hi = p.kernel.upper_bound();
    for (const auto& c : p.controls) {
      if (!c.kernel) throw ProblemError("problem: control '" + c.label + "' has no kernel");
      for (const auto& x : nodes) {
        for (const auto& y : ys) {
          const double kp = c.kernel(x, y);
          const double km = c.kernel(x, -1.0 * y);
          require_finite(kp, "kernel", c, x);
          if (kp < 0.0) throw ProblemError("problem: negative kernel for control '" + c.label + "'");
          const double asym = std::abs(kp - km);
          if (asym > sym.worst) {
            sym.worst = asym;
            sym.witness = x;
            sym.witness_offset = y;
          }
          const double excess = std::max(lo - kp, kp - hi);
          if (excess > bounds.worst || (bounds.worst == 0.0 && excess > 0.0)) {
            bounds.worst = excess;
            bounds.witness = x;
            bounds.witness_offset = y;
          }
        }
      }
    }
    sym.passed = sym.worst <= 1e-12 * std::max(1.0, hi);
    bounds.passed = bounds.worst <= 1e-12 * std::max(1.0, hi);
    bounds.detail = "admissible range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
    report.checks.push_back(sym);
    report.checks.push_back(bounds);
  }

  const bool has_zeroth = std::any_of(p.controls.begin(), p.controls.end(),
                                      [](const Control& c) { return static_cast<bool>(c.zeroth); });
  if (has_zeroth || p.discount) {
    double sup_c = -std::numeric_limits<double>::infinity();
    Point witness{0.0, 0.0};
    for (const auto& c : p.controls)
      for (const auto& x : nodes)
        if (c.zeroth_at(x) > sup_c) {
          sup_c = c.zeroth_at(x);
          witness = x;
        }
    CheckResult b1 = named("zeroth_order_sign");
    b1.worst = sup_c;
    b1.witness = witness;
    b1.passed = sup_c < 0.0;
    b1.detail = "sup_tau c_tau = " + std::to_string(sup_c);
    if (b1.passed) report.c_circ = -sup_c;
    report.checks.push_back(b1);
  }

  if (p.mixed) {
    CheckResult ell = named("diffusion_ellipticity");
    CheckResult dom = named("levy_majorant_domination");
    for (const auto& c : p.controls) {
      for (const auto& x : nodes) {
        if (c.diffusion) {
          const Matrix2 a = c.diffusion(x);
          double lo = a[0], hi = a[0], asym = 0.0;
          if (p.dimension == 2) {
            const double mean = 0.5 * (a[0] + a[3]);
            const double off = 0.5 * (a[1] + a[2]);
            const double rad = std::hypot(0.5 * (a[0] - a[3]), off);
            lo = mean - rad;
            hi = mean + rad;
            asym = std::abs(a[1] - a[2]);
          }
          const double excess = std::max({p.mixed->lambda - lo, hi - p.mixed->Lambda, asym});
          if (excess > ell.worst) {
            ell.worst = excess;
            ell.witness = x;
          }
        }
        if (c.levy) {
          for (const auto& y : ys) {
            const double k = c.levy(x, y);
            require_finite(k, "levy density", c, x);
            if (k < 0.0) throw ProblemError("problem: negative Levy density for '" + c.label + "'");
            const double excess = p.mixed->majorant ? k - p.mixed->majorant(y) : 0.0;
            if (excess > dom.worst) {
              dom.worst = excess;
              dom.witness = x;
              dom.witness_offset = y;
            }
          }
        }
      }
    }
    ell.passed = ell.worst <= 1e-12;
    dom.passed = dom.worst <= 1e-12;
    report.checks.push_back(ell);
    report.checks.push_back(dom);
    if (p.mixed->majorant) {
      auto K = p.mixed->majorant;
      report.checks.push_back(shell_integrability(
          "levy_majorant_integrability",
          [K](double r) { return std::min(r * r, 1.0) * K(Point{r, 0.0}); }, p.dimension));
    }
  }

  if (p.lyapunov) {
    const LyapunovData& ly = *p.lyapunov;
    const double mu = ly.mu;
    CheckResult nonneg = named("lyapunov_nonnegative");
    for (const auto& x : nodes) {
      const double v = ly.value(x);
      const double h = ly.h ? ly.h(x) : 0.0;
      if (!std::isfinite(v) || !std::isfinite(h)) throw ProblemError("problem: non-finite V or h");
      if (std::min(v, h) < nonneg.worst) {
        nonneg.worst = std::min(v, h);
        nonneg.witness = x;
      }
    }
    nonneg.passed = nonneg.worst >= 0.0;
    report.checks.push_back(nonneg);

    // Monotone growth along rays beyond radius 1 stands in for inf-compactness.
    CheckResult growth = named("inf_compact_proxy");
    growth.proxy = true;
    const int rays = p.dimension == 1 ? 2 : 8;
    for (int k = 0; k < rays; ++k) {
      const double angle = 2.0 * M_PI * k / rays;
      const Point dir = p.dimension == 1 ? Point{k == 0 ? 1.0 : -1.0, 0.0}
                                         : Point{std::cos(angle), std::sin(angle)};
      double prev_v = -1.0, prev_h = -1.0;
      for (double r = 1.0; r <= grid.radius(); r += grid.spacing()) {
        const Point x = r * dir;
        const double v = ly.value(x);
        const double h = ly.h ? ly.h(x) : v;
        const double drop = std::max(prev_v - v, prev_h - h);
        if (drop > growth.worst) {
          growth.worst = drop;
          growth.witness = x;
        }
        prev_v = v;
        prev_h = h;
      }
    }
    growth.passed = growth.worst <= 0.0;
    growth.detail = "V and h nondecreasing along sampled rays beyond radius 1";
    report.checks.push_back(growth);

    auto V = ly.value;
    const int d = p.dimension;
    report.checks.push_back(shell_integrability(
        "lyapunov_weighted_integrability",
        [V, mu, d, s](double r) {
          return std::pow(V(Point{r, 0.0}), 1.0 + mu) / (1.0 + std::pow(r, d + 2.0 * s));
        },
        d));

    RatioTracker drift{"drift_growth_ratio"};
    RatioTracker cost{"cost_growth_ratio"};
    RatioTracker zeroth{"zeroth_growth_ratio"};
    for (const auto& c : p.controls) {
      for (const auto& x : nodes) {
        const double v1 = 1.0 + ly.value(x);
        const bool outer = norm(x) > half_radius;
        drift.add(norm(c.drift_at(x)) / std::pow(v1, (2.0 * s - 1.0) * mu), x, outer);
        cost.add(std::abs(c.cost_at(x)) / std::pow(v1, 1.0 + 2.0 * s * mu), x, outer);
        if (has_zeroth) zeroth.add(std::abs(c.zeroth_at(x)) / std::pow(v1, 2.0 * s * mu), x, outer);
      }
    }
    report.checks.push_back(drift.result());
    report.checks.push_back(cost.result());
    if (has_zeroth) report.checks.push_back(zeroth.result());
  }
  return report;
}

}  // namespace nlhjb
