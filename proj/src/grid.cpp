#include "nlhjb/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace nlhjb {

double norm(const Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1]); }
Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1]}; }
Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1]}; }
Point operator*(double a, const Point& p) { return {a * p[0], a * p[1]}; }
double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1]; }

namespace {

// Relative slack so that points sitting exactly on the sphere are kept.
constexpr double kBallSlack = 1e-12;

bool inside(const LatticeIndex& m, int dimension, double spacing, double radius) {
  double r2 = static_cast<double>(m[0]) * m[0];
  if (dimension == 2) r2 += static_cast<double>(m[1]) * m[1];
  return std::sqrt(r2) * spacing <= radius * (1.0 + kBallSlack);
}

}  // namespace

std::vector<LatticeIndex> ball_lattice(int dimension, double spacing, double radius) {
  if (dimension != 1 && dimension != 2)
    throw std::invalid_argument("grid: unsupported dimension " + std::to_string(dimension));
  if (!(spacing > 0.0) || !std::isfinite(spacing) || !(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("grid: spacing and radius must be positive");
  const int n = static_cast<int>(std::floor(radius / spacing * (1.0 + kBallSlack)));
  const int lo2 = dimension == 2 ? -n : 0;
  const int hi2 = dimension == 2 ? n : 0;
  std::vector<LatticeIndex> out;
  for (int a = -n; a <= n; ++a)
    for (int b = lo2; b <= hi2; ++b)
      if (inside({a, b}, dimension, spacing, radius)) out.push_back({a, b});
  return out;
}

Grid Grid::build(int dimension, double spacing, double radius) {
  if (dimension != 1 && dimension != 2)
    throw std::invalid_argument("grid: unsupported dimension " + std::to_string(dimension));
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw std::invalid_argument("grid: spacing must be positive");
  if (!(radius >= 4.0 * spacing) || !std::isfinite(radius))
    throw std::invalid_argument("grid: radius must be at least 4 * spacing");

  Grid g;
  g.dimension_ = dimension;
  g.spacing_ = spacing;
  g.radius_ = radius;
  g.half_width_ = static_cast<int>(std::floor(radius / spacing * (1.0 + kBallSlack)));
  const int side = 2 * g.half_width_ + 1;
  g.box_.assign(dimension == 1 ? side : static_cast<std::size_t>(side) * side, -1);
  for (const LatticeIndex& m : ball_lattice(dimension, spacing, radius)) {
    g.box_[g.box_offset(m)] = static_cast<long>(g.nodes_.size());
    if (m[0] == 0 && m[1] == 0) g.origin_ = g.nodes_.size();
    g.lattice_.push_back(m);
    g.nodes_.push_back(g.coordinates(m));
  }
  return g;
}

Point Grid::coordinates(const LatticeIndex& m) const {
  return {spacing_ * m[0], dimension_ == 2 ? spacing_ * m[1] : 0.0};
}

std::size_t Grid::box_offset(const LatticeIndex& m) const {
  const int side = 2 * half_width_ + 1;
  std::size_t off = static_cast<std::size_t>(m[0] + half_width_);
  if (dimension_ == 2) off = off * side + static_cast<std::size_t>(m[1] + half_width_);
  return off;
}

bool Grid::contains(const LatticeIndex& m) const { return index_of(m).has_value(); }

std::optional<std::size_t> Grid::index_of(const LatticeIndex& m) const {
  if (std::abs(m[0]) > half_width_) return std::nullopt;
  if (dimension_ == 2 && std::abs(m[1]) > half_width_) return std::nullopt;
  if (dimension_ == 1 && m[1] != 0) return std::nullopt;
  const long idx = box_[box_offset(m)];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

LatticeIndex Grid::round(const Point& x) const {
  LatticeIndex m{static_cast<int>(std::lround(x[0] / spacing_)), 0};
  if (dimension_ == 2) m[1] = static_cast<int>(std::lround(x[1] / spacing_));
  return m;
}

std::size_t Grid::nearest_index(const Point& x) const {
  Point target = x;
  if (dimension_ == 1) target[1] = 0.0;
  const double r = norm(target);
  if (r > radius_) target = (radius_ / r) * target;
  const LatticeIndex c = round(target);
  if (auto idx = index_of(c)) return *idx;

  // The rounded point fell just outside the ball; search its neighbourhood.
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const int w = 2;
  for (int a = -w; a <= w; ++a) {
    for (int b = (dimension_ == 2 ? -w : 0); b <= (dimension_ == 2 ? w : 0); ++b) {
      auto idx = index_of({c[0] + a, c[1] + b});
      if (!idx) continue;
      const Point diff = nodes_[*idx] - target;
      const double d = diff[0] * diff[0] + diff[1] * diff[1];
      // Distances equal up to roundoff count as ties; the lowest index wins.
      const double slack = 1e-12 * spacing_ * spacing_;
      if (d < best_d - slack || (d <= best_d + slack && *idx < best)) {
        best_d = d;
        best = *idx;
      }
    }
  }
  if (!std::isfinite(best_d)) throw std::logic_error("grid: no node near projected point");
  return best;
}

ExteriorRule ExteriorRule::zero() { return ExteriorRule{}; }

ExteriorRule ExteriorRule::constant(double value) {
  ExteriorRule r;
  r.kind_ = value == 0.0 ? Kind::Zero : Kind::Constant;
  r.constant_ = value;
  return r;
}

ExteriorRule ExteriorRule::function(ScalarField f) {
  if (!f) throw std::invalid_argument("exterior rule: empty function");
  ExteriorRule r;
  r.kind_ = Kind::Function;
  r.f_ = std::move(f);
  return r;
}

ExteriorRule ExteriorRule::boundary() {
  ExteriorRule r;
  r.kind_ = Kind::Boundary;
  return r;
}

double ExteriorRule::value(const Point& x) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return constant_;
    case Kind::Function: return f_(x);
    case Kind::Boundary: break;
  }
  throw std::logic_error("exterior rule: boundary rule has no field-independent value");
}

const char* to_string(ExteriorRule::Kind kind) {
  switch (kind) {
    case ExteriorRule::Kind::Zero: return "zero";
    case ExteriorRule::Kind::Constant: return "constant";
    case ExteriorRule::Kind::Function: return "function";
    case ExteriorRule::Kind::Boundary: return "boundary";
  }
  return "unknown";
}

double evaluate_extended(const Grid& grid, std::span<const double> field, const ExteriorRule& rule,
                         const Point& x) {
  const LatticeIndex m = grid.round(x);
  const Point snapped = grid.coordinates(m);
  const double tol = 1e-9 * grid.spacing();
  const bool on_lattice = std::abs(snapped[0] - x[0]) <= tol &&
                          (grid.dimension() == 1 || std::abs(snapped[1] - x[1]) <= tol);
  if (on_lattice) {
    if (auto idx = grid.index_of(m)) return field[*idx];
  }
  const double r = grid.dimension() == 1 ? std::abs(x[0]) : norm(x);
  if (r <= grid.radius() * (1.0 + kBallSlack) || rule.kind() == ExteriorRule::Kind::Boundary)
    return field[grid.nearest_index(x)];
  return rule.value(x);
}

}  // namespace nlhjb
