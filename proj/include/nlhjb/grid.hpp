#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace nlhjb {

// Points always carry two coordinates; in one dimension the second one is 0.
using Point = std::array<double, 2>;
using LatticeIndex = std::array<int, 2>;

using ScalarField = std::function<double(const Point&)>;

double norm(const Point& p);
Point operator+(const Point& a, const Point& b);
Point operator-(const Point& a, const Point& b);
Point operator*(double a, const Point& p);
double dot(const Point& a, const Point& b);

/// Lattice indices m with |hx * m| <= R in lexicographic order. No lower
/// bound on R / hx.
std::vector<LatticeIndex> ball_lattice(int dimension, double spacing, double radius);

/// Uniform lattice {hx * m : m in Z^d} restricted to the closed ball B_R.
///
/// Nodes are stored in lexicographic order of their lattice index, so two
/// grids built from the same parameters are identical node by node. The
/// lattice is centred at the origin, hence the origin is always a node.
class Grid {
 public:
  /// Throws std::invalid_argument unless spacing > 0, radius >= 4 * spacing
  /// and dimension is 1 or 2.
  static Grid build(int dimension, double spacing, double radius);

  int dimension() const { return dimension_; }
  double spacing() const { return spacing_; }
  double radius() const { return radius_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t origin_index() const { return origin_; }
  /// Largest |m_i| over all nodes.
  int half_width() const { return half_width_; }

  const Point& node(std::size_t i) const { return nodes_[i]; }
  const LatticeIndex& lattice(std::size_t i) const { return lattice_[i]; }
  const std::vector<Point>& nodes() const { return nodes_; }

  Point coordinates(const LatticeIndex& m) const;
  bool contains(const LatticeIndex& m) const;
  /// Node index of a lattice point, or nullopt when it lies outside the ball.
  std::optional<std::size_t> index_of(const LatticeIndex& m) const;
  /// Lattice point nearest to x (no ball restriction).
  LatticeIndex round(const Point& x) const;
  /// Nearest node to x. Exterior points are first projected radially onto
  /// the sphere of radius R. The rounded lattice point wins when it is a node;
  /// otherwise ties (squared distances within 1e-12 hx^2) go to the lower index.
  std::size_t nearest_index(const Point& x) const;

 private:
  Grid() = default;
  std::size_t box_offset(const LatticeIndex& m) const;

  int dimension_ = 1;
  double spacing_ = 1.0;
  double radius_ = 1.0;
  int half_width_ = 0;
  std::size_t origin_ = 0;
  std::vector<Point> nodes_;
  std::vector<LatticeIndex> lattice_;
  std::vector<long> box_;  // dense lookup over [-half_width, half_width]^d, -1 outside
};

/// Values assigned to points outside the computational ball.
///
/// Zero and Function are the classical Dirichlet exterior conditions;
/// Constant is a Function rule with a known constant value (lets the
/// assembly skip tail quadrature). Boundary copies the value of the node
/// nearest to the radial projection of the point, which keeps constants
/// exact solutions of the truncated problem.
class ExteriorRule {
 public:
  enum class Kind { Zero, Constant, Function, Boundary };

  static ExteriorRule zero();
  static ExteriorRule constant(double value);
  static ExteriorRule function(ScalarField f);
  static ExteriorRule boundary();

  Kind kind() const { return kind_; }
  bool depends_on_field() const { return kind_ == Kind::Boundary; }
  double constant_value() const { return constant_; }
  /// Value of a field-independent rule. Throws std::logic_error for Boundary.
  double value(const Point& x) const;

 private:
  Kind kind_ = Kind::Zero;
  double constant_ = 0.0;
  ScalarField f_;
};

const char* to_string(ExteriorRule::Kind kind);

/// Grid value at x when x is a node, the value at the nearest node for other
/// points of the ball, otherwise the exterior value.
double evaluate_extended(const Grid& grid, std::span<const double> field, const ExteriorRule& rule,
                         const Point& x);

}  // namespace nlhjb
