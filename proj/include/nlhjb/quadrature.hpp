#pragma once

#include <cstddef>
#include <vector>

#include "nlhjb/grid.hpp"

namespace nlhjb {

/// Radial sampling of the exterior part |y| > R_far of the jump integral.
struct TailOptions {
  int angles = 16;              // directions in two dimensions (even)
  double resolve_radius = 0.0;  // uniform panels up to here; 0 disables them
  double resolve_width = 0.5;
  int points_per_panel = 4;     // Gauss-Legendre points per radial panel
  double panel_ratio = 2.0;     // geometric panels beyond the resolved range
  double mass_cutoff = 1e-16;   // relative mass left to the remainder point
};

struct TailPoint {
  Point y;
  double stable_weight;   // share of the integral of |y|^{-d-2s} over |y| > R_far
  double measure_weight;  // share of Lebesgue measure dy
};

/// Quadrature of y -> delta(u, x, y) |y|^{-d-2s} on a lattice.
///
/// Summing weights[j] * delta(u, x, offsets[j]) over all offsets (both signs)
/// plus the tail approximates the integral over R^d. In one dimension the
/// weights come from piecewise-linear interpolation of delta/|y|^2 against
/// |y|^{1-2s}; in two dimensions they are cell masses at the lattice points.
/// The part of the integral below lattice resolution enters as core_coefficient
/// times delta(u, x, +-h e_i) for every signed axis direction and is already
/// included in the weights of those offsets. Tail points close enough for
/// x + y to land back in the ball (|y| <= 2R + hx) are rounded to the lattice.
struct JumpQuadrature {
  int dimension = 1;
  double s = 0.75;
  double spacing = 1.0;
  double far_radius = 0.0;  // snapped to a multiple of the spacing
  int far_index = 0;        // far_radius / spacing

  std::vector<LatticeIndex> offsets;
  std::vector<Point> points;
  std::vector<double> weights;
  std::vector<std::size_t> pair;  // index of -offsets[j]
  double core_coefficient = 0.0;

  std::vector<TailPoint> tail;
  double tail_mass = 0.0;  // closed form of the integral over |y| > far_radius

  std::size_t size() const { return offsets.size(); }
  double lattice_mass() const;
  double tail_stable_sum() const;
};

/// Closed-form mass of |y|^{-d-2s} outside the ball of radius r.
double tail_mass_closed_form(int dimension, double s, double r);

/// Kernel constant turning the delta form of the integral into minus the
/// fractional Laplacian: half of the usual constant of the singular integral.
double fractional_laplacian_constant(int dimension, double s);

/// Integral of |y|^{-2s} over the unit square centred at 0.
double unit_square_core_moment(double s);

/// Throws std::invalid_argument when far_radius < grid radius + 1 or s is
/// outside (1/2, 1).
JumpQuadrature build_quadrature(const Grid& grid, double s, double far_radius,
                                const TailOptions& tail = {});

}  // namespace nlhjb
