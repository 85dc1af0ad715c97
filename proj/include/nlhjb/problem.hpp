#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nlhjb/grid.hpp"

namespace nlhjb {

using VectorField = std::function<Point(const Point&)>;
/// Row-major 2x2 matrix; one-dimensional problems only use entry 0.
using Matrix2 = std::array<double, 4>;
using MatrixField = std::function<Matrix2(const Point&)>;
/// Density factor k(x, y) multiplying |y|^{-d-2s}, or a full Levy density K(x, y).
using KernelFactor = std::function<double(const Point& x, const Point& y)>;

/// Raised for malformed problems (NaN coefficients, negative kernels,
/// inadmissible parameter combinations).
class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KernelSpec {
  double s = 0.75;       // fractional order, in (1/2, 1)
  double lambda = 1.0;   // lower ellipticity constant
  double Lambda = 1.0;   // upper ellipticity constant
  bool enabled = true;   // false: no fractional jump part (mixed problems only)

  double lower_bound() const { return (2.0 - 2.0 * s) * lambda; }
  double upper_bound() const { return (2.0 - 2.0 * s) * Lambda; }
};

struct Control {
  std::string label;
  KernelFactor kernel;                        // k_tau(x, y); required when jumps are enabled
  bool kernel_translation_invariant = false;  // k_tau depends on y only
  VectorField drift;                          // b_tau; empty means 0
  ScalarField cost;                           // g_tau; empty means 0
  ScalarField zeroth;                         // c_tau; empty means 0
  MatrixField diffusion;                      // a_tau, mixed problems only
  KernelFactor levy;                          // K_tau(x, y), mixed problems only
  bool levy_translation_invariant = false;

  Point drift_at(const Point& x) const { return drift ? drift(x) : Point{0.0, 0.0}; }
  double cost_at(const Point& x) const { return cost ? cost(x) : 0.0; }
  double zeroth_at(const Point& x) const { return zeroth ? zeroth(x) : 0.0; }
};

/// Local second-order part and compensated Levy part of a mixed operator.
struct MixedSpec {
  double lambda = 1.0;  // ellipticity of a_tau
  double Lambda = 1.0;
  std::function<double(const Point& y)> majorant;  // K(y) >= K_tau(x, y)
  /// Second moment of the majorant over the ball of radius rho; used for
  /// the part of the Levy integral below lattice resolution. Empty means 0.
  std::function<double(double rho)> core_moment;
};

struct LyapunovData {
  ScalarField value;      // V
  VectorField gradient;   // grad V
  MatrixField hessian;    // D^2 V
  ScalarField h;          // h, empty until an envelope is known
  double k0 = 0.0;
  double mu = 0.0;
  std::optional<double> gamma;
  std::optional<double> theta;
  std::optional<double> sigma;

  /// Exponent of the envelope h(x) = k1 |x|^p; p = theta + gamma - 1.
  double envelope_exponent() const;
};

struct ControlProblem {
  std::string family = "custom";
  int dimension = 1;
  KernelSpec kernel;
  std::vector<Control> controls;
  std::optional<MixedSpec> mixed;
  std::optional<LyapunovData> lyapunov;
  std::optional<double> discount;  // set when c_tau == -alpha for every control
  std::map<std::string, double> parameters;

  std::size_t control_index(std::string_view label) const;
};

/// Copy with c_tau == -alpha on every control.
ControlProblem with_discount(const ControlProblem& p, double alpha);
/// Copy with g_tau replaced by g_tau + kappa.
ControlProblem with_cost_shift(const ControlProblem& p, double kappa);
/// Copy with g_tau replaced by factor * g_tau.
ControlProblem with_cost_scale(const ControlProblem& p, double factor);

/// Radial V with V(x) = |x|^gamma for |x| >= 1 and the even quartic
/// a + b|x|^2 + c|x|^4 inside the unit ball matching value, first and second
/// radial derivatives at |x| = 1.
LyapunovData power_lyapunov(double gamma);

struct ExampleOptions {
  double lambda = 1.0;
  double Lambda = 1.5;
  double effort_cost = 0.25;       // extra running cost of the strong control
  std::optional<double> cost_exponent;  // default: half of min(theta+gamma-1, 2 s theta/(2s-1))
  bool outward_drift = false;  // +x|x|^{theta-1}: the anti-Lyapunov variant
};

/// Two-control family with V = |x|^gamma, drifts -c x|x|^{theta-1} and
/// constant kernels at the two ellipticity bounds. Throws ProblemError naming
/// the violated inequality when (gamma, theta, s) is inadmissible.
ControlProblem power_drift_problem(double gamma, double theta, int dimension, double s,
                                   const ExampleOptions& options = {});

/// Two controls, both with running cost kappa and different OU-type dynamics.
ControlProblem constant_cost_problem(double kappa, int dimension, double s);

/// Mixed local-nonlocal problem with a == identity, no jumps, and running
/// cost kappa on every control.
ControlProblem mixed_constant_cost_problem(double kappa, int dimension);

struct CheckResult {
  std::string name;
  bool passed = true;
  bool proxy = false;  // sampled stand-in for a property not decidable on a grid
  double worst = 0.0;
  Point witness{0.0, 0.0};
  Point witness_offset{0.0, 0.0};
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  std::optional<double> c_circ;  // -max_tau c_tau over sampled nodes

  bool passed() const;
  const CheckResult* find(std::string_view name) const;
};

/// Checks the structural assumptions that can be sampled on a grid. Failures
/// are reported; NaN coefficients and negative kernels throw ProblemError.
ValidationReport validate_problem(const ControlProblem& p, const Grid& grid,
                                  std::span<const Point> offsets);

}  // namespace nlhjb
