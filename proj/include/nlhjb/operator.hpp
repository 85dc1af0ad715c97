#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nlhjb/grid.hpp"
#include "nlhjb/problem.hpp"
#include "nlhjb/quadrature.hpp"

namespace nlhjb {

/// Raised when an assembled stencil would carry a negative off-diagonal weight.
class MonotonicityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AssemblyOptions {
  bool drift = true;
  bool cost = true;
  bool zeroth = true;
  bool diffusion = true;
};

/// One assembled row, merged by target node. Exterior targets under a
/// field-independent rule are folded into `constant`.
struct StencilRow {
  std::size_t node = 0;
  std::size_t control = 0;
  std::vector<std::size_t> targets;
  std::vector<double> weights;
  double diagonal = 0.0;  // includes the zeroth-order coefficient
  double zeroth = 0.0;
  double constant = 0.0;
  double exterior_mass = 0.0;
};

/// Compressed rows of node-to-node weights.
struct SparseRows {
  std::vector<std::size_t> start{0};
  std::vector<std::size_t> column;
  std::vector<double> value;
};

struct ControlBlock {
  std::string label;
  std::vector<double> diagonal;  // without the zeroth-order coefficient
  std::vector<double> remainder;  // diagonal plus all tabulated off-diagonal weights
  std::vector<double> zeroth;
  std::vector<double> constant;      // cost plus all folded exterior data
  std::vector<double> far_constant;  // cost plus exterior data outside the lattice box
  std::vector<double> exterior_mass;
  std::shared_ptr<const std::vector<double>> jump;  // null when there is no lattice jump part
  bool jump_shared = true;                          // one weight per offset, or one row per node
  std::shared_ptr<const SparseRows> local;
};

/// Per-control monotone stencils realizing u -> L_tau u + c_tau u + g_tau on a grid.
///
/// The lattice jump part is stored as weights per offset, either shared by
/// all nodes (translation-invariant kernels) or tabulated per node. Drift,
/// diffusion, tail targets that land inside the ball and redirects of the
/// boundary exterior rule live in a sparse part. Immutable once assembled.
class DiscreteOperator {
 public:
  std::size_t size() const;
  std::size_t controls() const { return blocks_.size(); }
  const Grid& grid() const;
  const ExteriorRule& exterior() const { return exterior_; }
  const std::string& label(std::size_t tau) const { return blocks_[tau].label; }
  std::size_t control_index(std::string_view label) const;
  double s() const { return s_; }

  /// (L_tau + c_tau) u + constant at every node.
  std::vector<double> apply(std::size_t tau, std::span<const double> u) const;
  std::vector<double> apply(std::string_view label, std::span<const double> u) const;
  /// Pointwise minimum over controls; ties go to the lowest control index.
  std::vector<double> apply_inf(std::span<const double> u, std::vector<int>* policy = nullptr) const;
  /// Row i evaluated with control policy[i].
  std::vector<double> apply_policy(std::span<const int> policy, std::span<const double> u) const;
  /// Linear part only (no constant) of apply_policy, written to out.
  void apply_policy_linear(std::span<const int> policy, std::span<const double> u,
                           std::span<double> out) const;

  /// Diagonal coefficient including c_tau.
  double diagonal(std::size_t tau, std::size_t i) const;
  double zeroth(std::size_t tau, std::size_t i) const { return blocks_[tau].zeroth[i]; }
  double constant(std::size_t tau, std::size_t i) const { return blocks_[tau].constant[i]; }
  double exterior_mass(std::size_t tau, std::size_t i) const { return blocks_[tau].exterior_mass[i]; }

  /// Copy with c_tau == -alpha at every node for every control.
  DiscreteOperator with_discount(double alpha) const;
  /// Copy with the constant term shifted by kappa.
  DiscreteOperator with_constant_shift(double kappa) const;

  StencilRow row(std::size_t tau, std::size_t i) const;

  struct Triplets {
    std::vector<std::size_t> row;
    std::vector<std::size_t> column;
    std::vector<double> value;
  };
  /// Frozen-policy matrix restricted to targets at most `reach` lattice steps
  /// away along every axis, diagonal included.
  Triplets near_field(std::span<const int> policy, int reach) const;

  struct Layout;

 private:
  friend DiscreteOperator assemble(const ControlProblem&, const Grid&, const JumpQuadrature&,
                                   const ExteriorRule&, const AssemblyOptions&);
  double apply_row(const ControlBlock& b, std::size_t i, const double* ubox, std::span<const double> u) const;
  std::vector<double> fill_box(std::span<const double> u, bool with_exterior) const;

  std::shared_ptr<const Layout> layout_;
  std::vector<ControlBlock> blocks_;
  ExteriorRule exterior_;
  double s_ = 0.0;
};

DiscreteOperator assemble(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                          const ExteriorRule& ext, const AssemblyOptions& options = {});

/// Sum over lattice offsets inside the unit ball of h^d K(x, y) y, the first
/// moment removed by the compensated Levy integral.
Point levy_compensator(const Control& c, const JumpQuadrature& q, const Point& x);

/// Stencil rows as JSON: {"dimension", "spacing", "controls": [labels],
/// "rows": [{"node", "lattice", "control", "diagonal", "zeroth", "constant",
/// "exterior_mass", "offsets": [[m1, m2], ...], "weights": [...]}]}, where
/// offsets are target minus node in lattice units. Empty `nodes` dumps all.
nlohmann::json stencil_json(const DiscreteOperator& op, const std::vector<std::size_t>& nodes = {});

enum class PucciSign { Plus, Minus };

/// Extremal operators over the kernel class with constants (lambda, Lambda):
/// (2-2s) sum_j w_j [Lambda delta^+ - lambda delta^-] for Plus and
/// (2-2s) sum_j w_j [lambda delta^+ - Lambda delta^-] for Minus.
std::vector<double> pucci_extremal(const JumpQuadrature& q, const Grid& grid,
                                   std::span<const double> u, const ExteriorRule& ext,
                                   PucciSign sign, double lambda, double Lambda);

}  // namespace nlhjb
