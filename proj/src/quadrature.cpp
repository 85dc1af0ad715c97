#include "nlhjb/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nlhjb {

namespace {

using Rule = std::vector<std::pair<double, double>>;  // (node, weight) on [-1, 1]

template <unsigned N>
Rule expand_rule() {
  using G = boost::math::quadrature::gauss<double, N>;
  Rule r;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.emplace_back(x[i], w[i]);
    if (x[i] != 0.0) r.emplace_back(-x[i], w[i]);
  }
  std::sort(r.begin(), r.end());
  return r;
}

const Rule& legendre_rule(int n) {
  static const Rule r4 = expand_rule<4>();
  static const Rule r7 = expand_rule<7>();
  static const Rule r10 = expand_rule<10>();
  switch (n) {
    case 4: return r4;
    case 7: return r7;
    case 10: return r10;
    default: break;
  }
  throw std::invalid_argument("quadrature: points_per_panel must be 4, 7 or 10");
}

// Integral of phi_m(t) (m + t)^{1-2s} over the hat support, in units of h.
double hat_moment(int m, double s, bool half) {
  const double a = 2.0 - 2.0 * s;
  if (m == 0) return 1.0 / a - 1.0 / (a + 1.0);
  if (m == 1 && !half) return (std::pow(2.0, a + 1.0) - 2.0) / (a * (a + 1.0));
  using G = boost::math::quadrature::gauss<double, 8>;
  auto left = [&](double t) { return (1.0 + t) * std::pow(m + t, 1.0 - 2.0 * s); };
  auto right = [&](double t) { return (1.0 - t) * std::pow(m + t, 1.0 - 2.0 * s); };
  double value = G::integrate(left, -1.0, 0.0);
  if (!half) value += G::integrate(right, 0.0, 1.0);
  return value;
}

double panel_mass(double s, double a, double b) {
  const double q = 2.0 * s;
  return (std::pow(a, -q) - (std::isinf(b) ? 0.0 : std::pow(b, -q))) / q;
}

void build_tail(JumpQuadrature& q, const TailOptions& opt) {
  const double s = q.s;
  const int d = q.dimension;
  if (d == 2 && (opt.angles < 2 || opt.angles % 2 != 0))
    throw std::invalid_argument("quadrature: tail angle count must be even and positive");
  if (!(opt.panel_ratio > 1.0)) throw std::invalid_argument("quadrature: panel ratio must exceed 1");
  const Rule& rule = legendre_rule(opt.points_per_panel);

  std::vector<Point> dirs;
  double angular = 1.0;
  if (d == 1) {
    dirs = {{1.0, 0.0}, {-1.0, 0.0}};
  } else {
    angular = 2.0 * std::numbers::pi / opt.angles;
    // Exact antipodal pairs: the first moment cancels for any even-in-y kernel.
    for (int k = 0; k < opt.angles / 2; ++k) {
      const double t = 2.0 * std::numbers::pi * k / opt.angles;
      dirs.push_back({std::cos(t), std::sin(t)});
      dirs.push_back({-std::cos(t), -std::sin(t)});
    }
  }

  const double R = q.far_radius;
  const double total = panel_mass(s, R, INFINITY);
  auto add_panel = [&](double a, double b) {
    const double mass = panel_mass(s, a, b);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double raw = 0.0;
    for (const auto& [t, w] : rule) raw += w * half * std::pow(mid + half * t, -1.0 - 2.0 * s);
    for (const auto& [t, w] : rule) {
      const double r = mid + half * t;
      const double stable = w * half * std::pow(r, -1.0 - 2.0 * s) * mass / raw;
      const double measure = w * half * (d == 2 ? r : 1.0);
      for (const auto& e : dirs) q.tail.push_back({r * e, stable * angular, measure * angular});
    }
  };

  double r = R;
  if (opt.resolve_radius > R) {
    if (!(opt.resolve_width > 0.0)) throw std::invalid_argument("quadrature: resolve width must be positive");
    const int n = static_cast<int>(std::ceil((opt.resolve_radius - R) / opt.resolve_width));
    const double width = (opt.resolve_radius - R) / n;
    for (int i = 0; i < n; ++i) add_panel(R + i * width, R + (i + 1) * width);
    r = opt.resolve_radius;
  }
  while (panel_mass(s, r, INFINITY) > opt.mass_cutoff * total) {
    add_panel(r, r * opt.panel_ratio);
    r *= opt.panel_ratio;
  }
  const double rest = panel_mass(s, r, INFINITY);
  if (rest > 0.0) {
    const double rr = r * std::pow(2.0, 1.0 / (2.0 * s));  // median of the remaining mass
    for (const auto& e : dirs) q.tail.push_back({rr * e, rest * angular, 0.0});
  }
}

}  // namespace

double JumpQuadrature::lattice_mass() const {
  double m = 0.0;
  for (double w : weights) m += w;
  return m;
}

double JumpQuadrature::tail_stable_sum() const {
  double m = 0.0;
  for (const auto& t : tail) m += t.stable_weight;
  return m;
}

double tail_mass_closed_form(int dimension, double s, double r) {
  const double surface = dimension == 1 ? 2.0 : 2.0 * std::numbers::pi;
  return surface * std::pow(r, -2.0 * s) / (2.0 * s);
}

double fractional_laplacian_constant(int dimension, double s) {
  const double d = dimension;
  return 0.5 * s * std::pow(4.0, s) * std::tgamma(0.5 * d + s) /
         (std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(1.0 - s));
}

double unit_square_core_moment(double s) {
  const double a = 2.0 - 2.0 * s;
  auto f = [a](double t) { return std::pow(2.0 * std::cos(t), -a); };
  const double angular =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, std::numbers::pi / 4.0);
  return 8.0 / a * angular;
}

JumpQuadrature build_quadrature(const Grid& grid, double s, double far_radius,
                                const TailOptions& tail) {
  if (!(s > 0.5 && s < 1.0)) throw std::invalid_argument("quadrature: s must lie in (1/2, 1)");
  if (!(far_radius >= grid.radius() + 1.0))
    throw std::invalid_argument("quadrature: far radius " + std::to_string(far_radius) +
                                " is below grid radius + 1 = " + std::to_string(grid.radius() + 1.0));

  JumpQuadrature q;
  q.dimension = grid.dimension();
  q.s = s;
  const double h = grid.spacing();
  q.spacing = h;
  q.far_index = static_cast<int>(std::floor(far_radius / h * (1.0 + 1e-12)));
  q.far_radius = q.far_index * h;
  const int M = q.far_index;
  const double scale = std::pow(h, 2.0 - 2.0 * s);

  if (q.dimension == 1) {
    q.core_coefficient = scale * hat_moment(0, s, false) / (h * h);
    for (int m = -M; m <= M; ++m) {
      if (m == 0) continue;
      const int a = std::abs(m);
      const double y = a * h;
      double w = scale * hat_moment(a, s, a == M) / (y * y);
      if (a == 1) w += q.core_coefficient;
      q.offsets.push_back({m, 0});
      q.points.push_back({m * h, 0.0});
      q.weights.push_back(w);
    }
  } else {
    q.core_coefficient = scale * unit_square_core_moment(s) / (4.0 * h * h);
    const double limit = static_cast<double>(M) * M * (1.0 + 1e-12);
    for (int a = -M; a <= M; ++a) {
      for (int b = -M; b <= M; ++b) {
        const double r2 = static_cast<double>(a) * a + static_cast<double>(b) * b;
        if (r2 == 0.0 || r2 > limit) continue;
        const double r = std::sqrt(r2) * h;
        double w = h * h * std::pow(r, -2.0 - 2.0 * s);
        if (r2 == 1.0) w += q.core_coefficient;
        q.offsets.push_back({a, b});
        q.points.push_back({a * h, b * h});
        q.weights.push_back(w);
      }
    }
  }
  // Offsets are listed in lexicographic order, so -y_j sits at the mirrored position.
  const std::size_t n = q.offsets.size();
  q.pair.resize(n);
  for (std::size_t j = 0; j < n; ++j) q.pair[j] = n - 1 - j;

  q.tail_mass = tail_mass_closed_form(q.dimension, s, q.far_radius);
  build_tail(q, tail);
  const double reach = 2.0 * grid.radius() + grid.spacing();
  for (auto& tp : q.tail) {
    if (norm(tp.y) > reach) continue;
    tp.y = {grid.spacing() * std::round(tp.y[0] / grid.spacing()),
            grid.spacing() * std::round(tp.y[1] / grid.spacing())};
  }
  return q;
}

}  // namespace nlhjb
