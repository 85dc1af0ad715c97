#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

namespace {

double length(const Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1]); }

// Nearest node by exhaustive search. Exact ties go to the lattice point
// obtained by rounding each coordinate half away from zero, if it is a node.
std::size_t nearest_node(const Grid& g, Point z) {
  if (g.dimension() == 1) z[1] = 0.0;
  const double r = length(z);
  if (r > g.radius()) z = {z[0] * g.radius() / r, z[1] * g.radius() / r};
  const double h = g.spacing();
  const nlhjb::LatticeIndex rounded{static_cast<int>(std::lround(z[0] / h)),
                                    static_cast<int>(std::lround(z[1] / h))};
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ties;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double dx = g.node(k)[0] - z[0], dy = g.node(k)[1] - z[1];
    const double d2 = dx * dx + dy * dy;
    if (d2 < best - 1e-12 * h * h) {
      best = d2;
      ties = {k};
    } else if (std::abs(d2 - best) <= 1e-12 * h * h) {
      ties.push_back(k);
    }
  }
  for (std::size_t k : ties)
    if (g.lattice(k) == rounded) return k;
  return *std::min_element(ties.begin(), ties.end());
}

struct RowSink {
  const Grid& g;
  const nlhjb::ExteriorRule& ext;
  Eigen::MatrixXd& A;
  Eigen::VectorXd& b;
  std::size_t i;

  // Adds w * u(z), with u extended outside the grid by the rule.
  void value_at(const Point& z, double w) {
    const double h = g.spacing();
    const double mx = std::round(z[0] / h), my = std::round(z[1] / h);
    const bool on_lattice = std::abs(mx * h - z[0]) <= 1e-9 * h &&
                            (g.dimension() == 1 || std::abs(my * h - z[1]) <= 1e-9 * h);
    const double r = g.dimension() == 1 ? std::abs(z[0]) : length(z);
    if (r <= g.radius() * (1.0 + 1e-12)) {
      if (on_lattice) {
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (g.lattice(k)[0] == static_cast<int>(mx) &&
              (g.dimension() == 1 || g.lattice(k)[1] == static_cast<int>(my))) {
            A(i, k) += w;
            return;
          }
        }
      }
      A(i, nearest_node(g, z)) += w;
      return;
    }
    switch (ext.kind()) {
      case nlhjb::ExteriorRule::Kind::Zero: return;
      case nlhjb::ExteriorRule::Kind::Boundary: A(i, nearest_node(g, z)) += w; return;
      default: b(i) += w * ext.value(z);
    }
  }
  void self(double w) { A(i, i) += w; }
};

}  // namespace

std::vector<DenseOracle> build_dense(const nlhjb::ControlProblem& p, const Grid& grid,
                                     const nlhjb::JumpQuadrature& q, const nlhjb::ExteriorRule& ext) {
  const std::size_t n = grid.size();
  if (n > kMaxNodes) throw OracleError("dense oracle: " + std::to_string(n) + " nodes exceed the cap");
  const int d = grid.dimension();
  const double h = grid.spacing();
  const double cell = d == 2 ? h * h : h;

  std::vector<DenseOracle> out;
  for (const auto& c : p.controls) {
    DenseOracle o;
    o.label = c.label;
    o.matrix = Eigen::MatrixXd::Zero(n, n);
    o.constant = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Point x = grid.node(i);
      RowSink row{grid, ext, o.matrix, o.constant, i};
      auto plus = [&](const Point& y) { return Point{x[0] + y[0], x[1] + y[1]}; };
      auto minus = [&](const Point& y) { return Point{x[0] - y[0], x[1] - y[1]}; };

      if (p.kernel.enabled && c.kernel) {
        // k(x, y) delta(u, x, y) summed over every lattice offset and tail point.
        for (std::size_t j = 0; j < q.points.size(); ++j) {
          const Point& y = q.points[j];
          const double w = q.weights[j] * c.kernel(x, y);
          row.value_at(plus(y), w);
          row.value_at(minus(y), w);
          row.self(-2.0 * w);
        }
        for (const auto& t : q.tail) {
          const double w = t.stable_weight * c.kernel(x, t.y);
          row.value_at(plus(t.y), w);
          row.value_at(minus(t.y), w);
          row.self(-2.0 * w);
        }
      }

      Point drift = c.drift ? c.drift(x) : Point{0.0, 0.0};
      if (c.levy) {
        if (d == 2) throw OracleError("dense oracle: Levy part only in one dimension");
        for (std::size_t j = 0; j < q.points.size(); ++j) {
          const Point& y = q.points[j];
          const double w = cell * c.levy(x, y);
          row.value_at(plus(y), w);
          row.self(-w);
          if (std::abs(y[0]) < 1.0) drift[0] -= w * y[0];
        }
        for (const auto& t : q.tail) {
          const double w = t.measure_weight * c.levy(x, t.y);
          row.value_at(plus(t.y), w);
          row.self(-w);
        }
        if (p.mixed && p.mixed->core_moment) {
          const double core = p.mixed->core_moment(0.5 * h) / (2.0 * h * h);
          row.value_at(plus({h, 0.0}), core);
          row.value_at(minus({h, 0.0}), core);
          row.self(-2.0 * core);
        }
      }

      for (int a = 0; a < d; ++a) {
        if (drift[a] == 0.0) continue;
        Point e{0.0, 0.0};
        e[a] = drift[a] > 0.0 ? h : -h;
        const double w = std::abs(drift[a]) / h;
        row.value_at(plus(e), w);
        row.self(-w);
      }

      if (c.diffusion) {
        const nlhjb::Matrix2 M = c.diffusion(x);
        auto second = [&](const Point& e, double coef) {
          row.value_at(plus(e), coef);
          row.value_at(minus(e), coef);
          row.self(-2.0 * coef);
        };
        if (d == 1) {
          second({h, 0.0}, M[0] / (h * h));
        } else {
          const double off = 0.5 * (M[1] + M[2]);
          second({h, 0.0}, (M[0] - std::abs(off)) / (h * h));
          second({0.0, h}, (M[3] - std::abs(off)) / (h * h));
          second({h, off >= 0.0 ? h : -h}, std::abs(off) / (h * h));
        }
      }

      row.self(c.zeroth ? c.zeroth(x) : 0.0);
      o.constant(i) += c.cost ? c.cost(x) : 0.0;
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<double> dense_apply(const DenseOracle& o, const std::vector<double>& u) {
  if (static_cast<std::size_t>(o.matrix.rows()) > kMaxNodes) throw OracleError("dense_apply: size cap exceeded");
  if (u.size() != static_cast<std::size_t>(o.matrix.cols())) throw OracleError("dense_apply: size mismatch");
  const Eigen::Map<const Eigen::VectorXd> v(u.data(), static_cast<Eigen::Index>(u.size()));
  const Eigen::VectorXd r = o.matrix * v + o.constant;
  return {r.data(), r.data() + r.size()};
}

FixedPoint dense_fixed_point(const std::vector<DenseOracle>& ops, double tol, double eta, int max_iter) {
  if (ops.empty()) throw OracleError("dense_fixed_point: no controls");
  const Eigen::Index n = ops.front().matrix.rows();
  double max_diag = 0.0;
  for (const auto& o : ops) max_diag = std::max(max_diag, o.matrix.diagonal().cwiseAbs().maxCoeff());
  if (eta <= 0.0) eta = 1.0 / max_diag;

  // Row-wise sup norm of I + eta A over all controls.
  double contraction = 0.0;
  for (const auto& o : ops) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = std::abs(1.0 + eta * o.matrix(i, i));
      for (Eigen::Index k = 0; k < n; ++k)
        if (k != i) s += eta * std::abs(o.matrix(i, k));
      contraction = std::max(contraction, s);
    }
  }
  if (!(contraction < 1.0))
    throw OracleError("dense_fixed_point: contraction factor " + std::to_string(contraction) + " >= 1");

  FixedPoint fp;
  fp.contraction = contraction;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd best = ops.front().matrix * u + ops.front().constant;
    for (std::size_t t = 1; t < ops.size(); ++t) best = best.cwiseMin(ops[t].matrix * u + ops[t].constant);
    u += eta * best;
    fp.iterations = it;
    fp.last_update = eta * best.cwiseAbs().maxCoeff();
    if (fp.last_update <= tol) break;
  }
  fp.w.assign(u.data(), u.data() + n);
  return fp;
}

double standard_constant(int d, double s) {
  return s * std::pow(4.0, s) * std::tgamma(0.5 * d + s) /
         (std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(1.0 - s));
}

namespace {

// Integral over (0, infinity) of (cos y - 1) y^{-1-2s}.
double cos_moment(double s) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto near = [s](double y) {
    if (!(y > 0.0)) return 0.0;
    if (y < 1e-3) return -0.5 * (1.0 - y * y / 12.0) * std::pow(y, 1.0 - 2.0 * s);
    const double h = std::sin(0.5 * y);
    return -2.0 * h * h * std::pow(y, -1.0 - 2.0 * s);
  };
  const double head = ts.integrate(near, 0.0, 1.0, 1e-14);
  boost::math::quadrature::ooura_fourier_cos<double> fc;
  boost::math::quadrature::ooura_fourier_sin<double> fs;
  auto shifted = [s](double t) { return std::pow(t + 1.0, -1.0 - 2.0 * s); };
  const double c = fc.integrate(shifted, 1.0).first;
  const double sn = fs.integrate(shifted, 1.0).first;
  const double oscillating = std::cos(1.0) * c - std::sin(1.0) * sn;
  return head + oscillating - 1.0 / (2.0 * s);
}

double gaussian_by_quadrature(double x, double s) {
  auto u = [](double t) { return std::exp(-t * t); };
  const double u2 = (4.0 * x * x - 2.0) * u(x);
  const double u4 = (16.0 * x * x * x * x - 48.0 * x * x + 12.0) * u(x);
  auto f = [&](double y) {
    if (!(y > 0.0)) return 0.0;
    if (y < 1e-3) return (u2 + u4 * y * y / 12.0) * std::pow(y, 1.0 - 2.0 * s);
    return (u(x + y) + u(x - y) - 2.0 * u(x)) * std::pow(y, -1.0 - 2.0 * s);
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  const double hi = 12.0 + std::abs(x);
  const double body = ts.integrate(f, 0.0, hi, 1e-14);
  // Beyond hi only -2 u(x) survives.
  const double rest = -2.0 * u(x) * std::pow(hi, -2.0 * s) / (2.0 * s);
  return standard_constant(1, s) * (body + rest);
}

double gaussian_by_symbol(double x, double s) {
  auto f = [&](double xi) { return std::pow(xi, 2.0 * s) * std::exp(-0.25 * xi * xi) * std::cos(xi * x); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 60.0, 20, 1e-15);
  return -v / std::sqrt(std::numbers::pi);
}

}  // namespace

double fractional_laplacian_reference(const std::string& test, double x, double s, double truncation) {
  if (!(s > 0.5 && s < 1.0)) throw OracleError("fractional_laplacian_reference: s outside (1/2, 1)");
  double value = 0.0, check = 0.0;
  if (test == "cos") {
    value = standard_constant(1, s) * 2.0 * std::cos(x) * cos_moment(s);
    check = -std::cos(x);
  } else if (test == "gaussian") {
    value = gaussian_by_quadrature(x, s);
    check = gaussian_by_symbol(x, s);
  } else if (test == "quadratic-truncated") {
    if (!(truncation > 0.0)) throw OracleError("quadratic-truncated: truncation radius required");
    boost::math::quadrature::tanh_sinh<double> ts;
    auto f = [s](double y) { return y > 0.0 ? 2.0 * std::pow(y, 1.0 - 2.0 * s) : 0.0; };
    value = (2.0 - 2.0 * s) * 2.0 * ts.integrate(f, 0.0, truncation, 1e-14);
    check = 4.0 * std::pow(truncation, 2.0 - 2.0 * s);
  } else {
    throw OracleError("fractional_laplacian_reference: unknown test '" + test + "'");
  }
  if (!(std::abs(value - check) <= 1e-8 * std::max(1.0, std::abs(check))))
    throw OracleError("fractional_laplacian_reference: quadrature and closed form disagree for " + test);
  return value;
}

Point fd_gradient(const nlhjb::ScalarField& f, const Point& x, int d, double step) {
  Point g{0.0, 0.0};
  for (int a = 0; a < d; ++a) {
    Point p = x, m = x;
    p[a] += step;
    m[a] -= step;
    g[a] = (f(p) - f(m)) / (2.0 * step);
  }
  return g;
}

nlhjb::Matrix2 fd_hessian(const nlhjb::ScalarField& f, const Point& x, int d, double step) {
  nlhjb::Matrix2 H{0.0, 0.0, 0.0, 0.0};
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      auto at = [&](double sa, double sb) {
        Point p = x;
        p[a] += sa * step;
        p[b] += sb * step;
        return f(p);
      };
      H[2 * a + b] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * step * step);
    }
  }
  return H;
}

}  // namespace oracle
