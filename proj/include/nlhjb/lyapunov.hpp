#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlhjb/grid.hpp"
#include "nlhjb/problem.hpp"
#include "nlhjb/quadrature.hpp"

namespace nlhjb {

struct LyapunovOptions {
  bool zeroth = false;  // add c_tau V
};

/// L_tau V at every node for every control: jump quadrature of V with V itself
/// as exterior data, plus the analytic drift and diffusion terms.
std::vector<std::vector<double>> evaluate_LV_per_control(const ControlProblem& p, const Grid& grid,
                                                         const JumpQuadrature& q,
                                                         const LyapunovOptions& options = {});

/// Pointwise supremum over controls of evaluate_LV_per_control.
std::vector<double> evaluate_LV(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                                const LyapunovOptions& options = {});

/// Smallest k0 >= 0 with sup_tau (L_tau V + c_tau V) + sup_tau |g_tau| <= k0 at
/// every node, using the same quadrature as the solve. With this constant the
/// discrete comparison principle gives |w| <= k0 / c_circ + V.
double barrier_constant(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                        bool with_zeroth);

struct LyapunovCertificate {
  std::vector<double> values;  // sup_tau L_tau V at the nodes
  double exponent = 0.0;       // h(x) = k1 |x|^exponent
  double k0 = 0.0;
  double k1 = 0.0;
  bool admissible = false;
  double fitted_slope = 0.0;
  double worst_margin = 0.0;   // min over nodes of k0 - h - values
  std::vector<std::size_t> violations;
  std::string tail_mode = "V evaluated in closed form at every exterior and tail point";
  // provenance
  int dimension = 1;
  double spacing = 0.0;
  double radius = 0.0;
  double far_radius = 0.0;
  double s = 0.0;
};

/// Two-pass fit of values <= k0 - k1 |x|^p. k1 is half the least-squares
/// decay slope on the outer half of the nodes; k0 then closes the remaining
/// gap (at least 1e-12). When the values do not decay, no admissible k1
/// exists and the violations list the outer nodes that do not decay.
LyapunovCertificate fit_envelope(const std::vector<double>& values, const LyapunovData& lyap,
                                 const Grid& grid);

/// evaluate_LV followed by fit_envelope, with the grid and quadrature recorded.
/// Throws std::invalid_argument when the problem has no Lyapunov function.
LyapunovCertificate certify(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q);

nlohmann::json certificate_json(const LyapunovCertificate& cert, const Grid& grid);

}  // namespace nlhjb
