#include "nlhjb/operator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <utility>

namespace nlhjb {

struct DiscreteOperator::Layout {
  Grid grid;
  int width = 0;  // half width of the extended box in lattice units
  std::size_t side = 0;
  std::vector<std::size_t> position;    // node -> extended box position
  std::vector<std::ptrdiff_t> shift;    // offset -> linear shift in the extended box
  std::vector<long> node_at;            // extended box position -> node or -1
  std::vector<long> nearest_at;         // exterior position -> nearest node (boundary rule)
  std::vector<double> exterior_value;   // exterior position -> rule value (constant and function rules)
  std::vector<LatticeIndex> offsets;

  explicit Layout(const Grid& g) : grid(g) {}

  std::size_t box(const LatticeIndex& m) const {
    std::size_t p = static_cast<std::size_t>(m[0] + width);
    if (grid.dimension() == 2) p = p * side + static_cast<std::size_t>(m[1] + width);
    return p;
  }
  std::size_t box_size() const { return grid.dimension() == 2 ? side * side : side; }
};

namespace {

constexpr double kBallSlack = 1e-12;

std::shared_ptr<DiscreteOperator::Layout> make_layout(const Grid& grid, const JumpQuadrature& q,
                                                      const ExteriorRule& ext) {
  const bool boundary_rule = ext.kind() == ExteriorRule::Kind::Boundary;
  auto L = std::make_shared<DiscreteOperator::Layout>(grid);
  const int d = grid.dimension();
  L->width = grid.half_width() + std::max(q.far_index, 1) + 1;
  L->side = static_cast<std::size_t>(2 * L->width + 1);
  L->offsets = q.offsets;
  L->node_at.assign(L->box_size(), -1);
  L->position.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    L->position[i] = L->box(grid.lattice(i));
    L->node_at[L->position[i]] = static_cast<long>(i);
  }
  const std::ptrdiff_t stride = d == 2 ? static_cast<std::ptrdiff_t>(L->side) : 0;
  L->shift.resize(q.offsets.size());
  for (std::size_t j = 0; j < q.offsets.size(); ++j)
    L->shift[j] = static_cast<std::ptrdiff_t>(q.offsets[j][0]) * (d == 2 ? stride : 1) +
                  (d == 2 ? q.offsets[j][1] : 0);
  if (ext.kind() == ExteriorRule::Kind::Constant || ext.kind() == ExteriorRule::Kind::Function) {
    L->exterior_value.assign(L->box_size(), 0.0);
    const int W = L->width;
    for (int a = -W; a <= W; ++a)
      for (int b = (d == 2 ? -W : 0); b <= (d == 2 ? W : 0); ++b) {
        const std::size_t p = L->box({a, b});
        if (L->node_at[p] < 0) L->exterior_value[p] = ext.value(grid.coordinates({a, b}));
      }
  }
  if (boundary_rule) {
    L->nearest_at.assign(L->box_size(), -1);
    const int W = L->width;
    for (int a = -W; a <= W; ++a)
      for (int b = (d == 2 ? -W : 0); b <= (d == 2 ? W : 0); ++b) {
        const std::size_t p = L->box({a, b});
        if (L->node_at[p] < 0)
          L->nearest_at[p] = static_cast<long>(grid.nearest_index(grid.coordinates({a, b})));
      }
  }
  return L;
}

std::string where(const Grid& grid, std::size_t i, const std::string& label) {
  std::ostringstream os;
  os << "node " << i << " (x=" << grid.node(i)[0];
  if (grid.dimension() == 2) os << ", " << grid.node(i)[1];
  os << "), control '" << label << "'";
  return os.str();
}

std::string offset_text(const Point& y, int d) {
  std::ostringstream os;
  os << "offset (" << y[0];
  if (d == 2) os << ", " << y[1];
  os << ")";
  return os.str();
}

// Accumulates one row: node targets, diagonal, exterior folding.
struct RowBuilder {
  const DiscreteOperator::Layout& L;
  const ExteriorRule& ext;
  std::size_t i;
  std::vector<std::pair<std::size_t, double>> entries;
  double diagonal = 0.0;
  double constant = 0.0;          // exterior data reached off the lattice box
  double lattice_constant = 0.0;  // exterior data at lattice box positions
  double exterior_mass = 0.0;
  // Diagonal minus the weights stored as node differences; kept separately so
  // that it is not formed by cancellation.
  double remainder = 0.0;

  RowBuilder(const DiscreteOperator::Layout& layout, const ExteriorRule& rule, std::size_t row)
      : L(layout), ext(rule), i(row) {}

  void to_node(std::size_t k, double w) {
    if (k == i) diagonal += w;
    else entries.emplace_back(k, w);
  }

  void exterior(const Point& y, double w, long nearest = -1, bool on_box = false) {
    double& sink = on_box ? lattice_constant : constant;
    if (ext.kind() == ExteriorRule::Kind::Boundary) {
      if (on_box) remainder += w;
    } else if (!on_box) {
      remainder -= w;
    }
    switch (ext.kind()) {
      case ExteriorRule::Kind::Zero:
        exterior_mass += w;
        return;
      case ExteriorRule::Kind::Constant:
        exterior_mass += w;
        sink += w * ext.constant_value();
        return;
      case ExteriorRule::Kind::Function:
        exterior_mass += w;
        sink += w * ext.value(y);
        return;
      case ExteriorRule::Kind::Boundary:
        to_node(nearest >= 0 ? static_cast<std::size_t>(nearest) : L.grid.nearest_index(y), w);
        return;
    }
  }

  void lattice(const LatticeIndex& m, double w) {
    if (auto k = L.grid.index_of(m)) {
      to_node(*k, w);
      return;
    }
    const int W = L.width;
    long nearest = -1;
    if (!L.nearest_at.empty() && std::abs(m[0]) <= W && std::abs(m[1]) <= W)
      nearest = L.nearest_at[L.box(m)];
    exterior(L.grid.coordinates(m), w, nearest);
  }

  void point(const Point& y, double w) {
    const double r = L.grid.dimension() == 1 ? std::abs(y[0]) : norm(y);
    if (r <= L.grid.radius() * (1.0 + kBallSlack)) to_node(L.grid.nearest_index(y), w);
    else exterior(y, w);
  }
};

void require_nonnegative(double w, const Grid& grid, std::size_t i, const std::string& label,
                         const std::string& what) {
  if (w >= 0.0) return;
  std::ostringstream os;
  os << "monotonicity violated at " << where(grid, i, label) << ", " << what << ": weight " << w;
  throw MonotonicityError(os.str());
}

// Offset weights of the lattice jump part at x: fractional part in delta form
// plus the uncompensated Levy part.
void jump_weights(const Control& c, const ControlProblem& p, const JumpQuadrature& q,
                  const Point& x, double* out) {
  const double cell = q.dimension == 2 ? q.spacing * q.spacing : q.spacing;
  const bool frac = p.kernel.enabled && c.kernel;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const Point& y = q.points[j];
    double w = 0.0;
    if (frac) w += q.weights[j] * (c.kernel(x, y) + c.kernel(x, -1.0 * y));
    if (c.levy) w += cell * c.levy(x, y);
    out[j] = w;
  }
}

}  // namespace

Point levy_compensator(const Control& c, const JumpQuadrature& q, const Point& x) {
  Point m{0.0, 0.0};
  if (!c.levy) return m;
  const double cell = q.dimension == 2 ? q.spacing * q.spacing : q.spacing;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const Point& y = q.points[j];
    if (norm(y) >= 1.0) continue;
    m = m + (cell * c.levy(x, y)) * y;
  }
  return m;
}

DiscreteOperator assemble(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                          const ExteriorRule& ext, const AssemblyOptions& options) {
  if (p.controls.empty()) throw ProblemError("assemble: control set is empty");
  if (p.dimension != grid.dimension() || q.dimension != grid.dimension())
    throw ProblemError("assemble: dimension mismatch between problem, grid and quadrature");
  if (std::abs(q.spacing - grid.spacing()) > 1e-14 * grid.spacing())
    throw ProblemError("assemble: quadrature spacing differs from grid spacing");
  if (p.kernel.enabled && std::abs(q.s - p.kernel.s) > 1e-14)
    throw ProblemError("assemble: quadrature order differs from kernel order");

  DiscreteOperator op;
  op.exterior_ = ext;
  op.s_ = q.s;
  auto layout = make_layout(grid, q, ext);
  op.layout_ = layout;
  const auto& L = *layout;
  const std::size_t n = grid.size();
  const std::size_t n_off = q.size();
  const int d = grid.dimension();
  const double h = grid.spacing();

  for (const auto& c : p.controls) {
    const bool frac = p.kernel.enabled && c.kernel;
    if (p.kernel.enabled && !c.kernel)
      throw ProblemError("assemble: control '" + c.label + "' has no kernel");
    const bool levy = static_cast<bool>(c.levy);
    const bool any_jump = frac || levy;
    const bool shared = (!frac || c.kernel_translation_invariant) &&
                        (!levy || c.levy_translation_invariant);

    ControlBlock block;
    block.label = c.label;
    block.diagonal.assign(n, 0.0);
    block.zeroth.assign(n, 0.0);
    block.constant.assign(n, 0.0);
    block.far_constant.assign(n, 0.0);
    block.remainder.assign(n, 0.0);
    block.exterior_mass.assign(n, 0.0);
    block.jump_shared = shared;

    std::vector<double> table;
    if (any_jump) {
      table.assign(shared ? n_off : n * n_off, 0.0);
      if (shared) jump_weights(c, p, q, Point{0.0, 0.0}, table.data());
    }
    double levy_core = 0.0;
    if (levy && p.mixed && p.mixed->core_moment)
      levy_core = p.mixed->core_moment(0.5 * h) / (2.0 * d * h * h);

    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        const Point& x = grid.node(i);
        const LatticeIndex& m = grid.lattice(i);
        RowBuilder rb{L, ext, i};

        if (any_jump) {
          double* t = shared ? table.data() : table.data() + i * n_off;
          if (!shared) jump_weights(c, p, q, x, t);
          double total = 0.0;
          for (std::size_t j = 0; j < n_off; ++j) {
            const double w = t[j];
            if (!(w >= 0.0))
              require_nonnegative(std::isnan(w) ? -1.0 : w, grid, i, c.label,
                                  offset_text(q.points[j], d));
            total += w;
            if (w == 0.0) continue;
            const auto pos = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(L.position[i]) + L.shift[j]);
            if (L.node_at[pos] >= 0) continue;
            const LatticeIndex target{m[0] + q.offsets[j][0], m[1] + q.offsets[j][1]};
            const long nearest = L.nearest_at.empty() ? -1 : L.nearest_at[pos];
            rb.exterior(grid.coordinates(target), w, nearest, true);
          }
          rb.diagonal -= total;

          for (const auto& tp : q.tail) {
            double w = 0.0;
            if (frac) w += tp.stable_weight * (c.kernel(x, tp.y) + c.kernel(x, -1.0 * tp.y));
            if (levy) w += tp.measure_weight * c.levy(x, tp.y);
            if (w == 0.0) continue;
            if (!(w >= 0.0)) require_nonnegative(w, grid, i, c.label, "tail " + offset_text(tp.y, d));
            rb.point(x + tp.y, w);
            rb.diagonal -= w;
          }
          if (levy_core > 0.0) {
            for (int a = 0; a < d; ++a) {
              LatticeIndex up = m, down = m;
              up[a] += 1;
              down[a] -= 1;
              rb.lattice(up, levy_core);
              rb.lattice(down, levy_core);
              rb.diagonal -= 2.0 * levy_core;
            }
          }
        }

        if (options.drift) {
          Point b = c.drift_at(x);
          if (levy) b = b - levy_compensator(c, q, x);
          for (int a = 0; a < d; ++a) {
            if (b[a] == 0.0) continue;
            LatticeIndex target = m;
            target[a] += b[a] > 0.0 ? 1 : -1;
            const double w = std::abs(b[a]) / h;
            rb.lattice(target, w);
            rb.diagonal -= w;
          }
        }

        if (options.diffusion && c.diffusion) {
          const Matrix2 A = c.diffusion(x);
          auto second_difference = [&](LatticeIndex e, double coef) {
            if (coef == 0.0) return;
            rb.lattice({m[0] + e[0], m[1] + e[1]}, coef);
            rb.lattice({m[0] - e[0], m[1] - e[1]}, coef);
            rb.diagonal -= 2.0 * coef;
          };
          if (d == 1) {
            require_nonnegative(A[0], grid, i, c.label, "diffusion coefficient");
            second_difference({1, 0}, A[0] / (h * h));
          } else {
            const double a12 = 0.5 * (A[1] + A[2]);
            if (A[0] < std::abs(a12) || A[3] < std::abs(a12)) {
              throw MonotonicityError("monotonicity violated at " + where(grid, i, c.label) +
                                      ": diffusion matrix is not diagonally dominant");
            }
            const double h2 = h * h;
            second_difference({1, 0}, (A[0] - std::abs(a12)) / h2);
            second_difference({0, 1}, (A[3] - std::abs(a12)) / h2);
            second_difference(a12 >= 0.0 ? LatticeIndex{1, 1} : LatticeIndex{1, -1}, std::abs(a12) / h2);
          }
        }

        block.diagonal[i] = rb.diagonal;
        block.remainder[i] = rb.remainder;
        block.far_constant[i] = rb.constant + (options.cost ? c.cost_at(x) : 0.0);
        block.constant[i] = block.far_constant[i] + rb.lattice_constant;
        block.zeroth[i] = options.zeroth ? c.zeroth_at(x) : 0.0;
        block.exterior_mass[i] = rb.exterior_mass;
        auto& e = rb.entries;
        std::sort(e.begin(), e.end());
        std::size_t k = 0;
        for (std::size_t r = 0; r < e.size(); ++r) {
          if (k > 0 && e[k - 1].first == e[r].first) e[k - 1].second += e[r].second;
          else e[k++] = e[r];
        }
        e.resize(k);
        for (const auto& [col, w] : e)
          if (!(w >= 0.0)) require_nonnegative(w, grid, i, c.label, "local entry to node " + std::to_string(col));
        rows[i] = std::move(e);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);

    auto sparse = std::make_shared<SparseRows>();
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& [col, w] : rows[i]) {
        sparse->column.push_back(col);
        sparse->value.push_back(w);
      }
      sparse->start.push_back(sparse->column.size());
    }
    block.local = std::move(sparse);
    if (any_jump) block.jump = std::make_shared<const std::vector<double>>(std::move(table));
    op.blocks_.push_back(std::move(block));
  }
  return op;
}

std::size_t DiscreteOperator::size() const { return layout_->grid.size(); }
const Grid& DiscreteOperator::grid() const { return layout_->grid; }

std::size_t DiscreteOperator::control_index(std::string_view label) const {
  for (std::size_t t = 0; t < blocks_.size(); ++t)
    if (blocks_[t].label == label) return t;
  throw std::out_of_range("operator: no control labelled '" + std::string(label) + "'");
}

double DiscreteOperator::diagonal(std::size_t tau, std::size_t i) const {
  return blocks_[tau].diagonal[i] + blocks_[tau].zeroth[i];
}

std::vector<double> DiscreteOperator::fill_box(std::span<const double> u, bool with_exterior) const {
  if (u.size() != size()) throw std::invalid_argument("operator: field size differs from grid size");
  std::vector<double> box = with_exterior && !layout_->exterior_value.empty()
                                ? layout_->exterior_value
                                : std::vector<double>(layout_->box_size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) box[layout_->position[i]] = u[i];
  return box;
}

double DiscreteOperator::apply_row(const ControlBlock& b, std::size_t i, const double* ubox,
                                   std::span<const double> u) const {
  const double ui = u[i];
  double v = (b.remainder[i] + b.zeroth[i]) * ui;
  if (b.jump) {
    const std::size_t n_off = layout_->shift.size();
    const double* t = b.jump->data() + (b.jump_shared ? 0 : i * n_off);
    const double* base = ubox + layout_->position[i];
    const std::ptrdiff_t* sh = layout_->shift.data();
    double acc = 0.0;
    for (std::size_t j = 0; j < n_off; ++j) acc += t[j] * (base[sh[j]] - ui);
    v += acc;
  }
  const SparseRows& s = *b.local;
  for (std::size_t e = s.start[i]; e < s.start[i + 1]; ++e) v += s.value[e] * (u[s.column[e]] - ui);
  return v;
}

std::vector<double> DiscreteOperator::apply(std::size_t tau, std::span<const double> u) const {
  if (tau >= blocks_.size()) throw std::out_of_range("operator: control index out of range");
  const auto box = fill_box(u, true);
  const auto& b = blocks_[tau];
  std::vector<double> out(u.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = apply_row(b, i, box.data(), u) + b.far_constant[i];
  return out;
}

std::vector<double> DiscreteOperator::apply(std::string_view label, std::span<const double> u) const {
  return apply(control_index(label), u);
}

std::vector<double> DiscreteOperator::apply_inf(std::span<const double> u, std::vector<int>* policy) const {
  const auto box = fill_box(u, true);
  const std::size_t n = u.size();
  std::vector<double> out(n);
  if (policy) policy->assign(n, 0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    int arg = 0;
    for (std::size_t t = 0; t < blocks_.size(); ++t) {
      const double v = apply_row(blocks_[t], i, box.data(), u) + blocks_[t].far_constant[i];
      if (t == 0 || v < best) {
        best = v;
        arg = static_cast<int>(t);
      }
    }
    out[i] = best;
    if (policy) (*policy)[i] = arg;
  }
  return out;
}

std::vector<double> DiscreteOperator::apply_policy(std::span<const int> policy,
                                                   std::span<const double> u) const {
  if (policy.size() != u.size()) throw std::invalid_argument("operator: policy and field sizes differ");
  const auto box = fill_box(u, true);
  std::vector<double> out(u.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = apply_row(blocks_[policy[i]], i, box.data(), u) + blocks_[policy[i]].far_constant[i];
  return out;
}

void DiscreteOperator::apply_policy_linear(std::span<const int> policy, std::span<const double> u,
                                           std::span<double> out) const {
  if (policy.size() != u.size() || out.size() != u.size())
    throw std::invalid_argument("operator: policy and field sizes differ");
  const auto box = fill_box(u, false);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = apply_row(blocks_[policy[i]], i, box.data(), u);
}

DiscreteOperator DiscreteOperator::with_discount(double alpha) const {
  DiscreteOperator op = *this;
  for (auto& b : op.blocks_) std::fill(b.zeroth.begin(), b.zeroth.end(), -alpha);
  return op;
}

DiscreteOperator DiscreteOperator::with_constant_shift(double kappa) const {
  DiscreteOperator op = *this;
  for (auto& b : op.blocks_) {
    for (double& c : b.constant) c += kappa;
    for (double& c : b.far_constant) c += kappa;
  }
  return op;
}

StencilRow DiscreteOperator::row(std::size_t tau, std::size_t i) const {
  const auto& b = blocks_.at(tau);
  const auto& L = *layout_;
  StencilRow r;
  r.node = i;
  r.control = tau;
  r.diagonal = diagonal(tau, i);
  r.zeroth = b.zeroth[i];
  r.constant = b.constant[i];
  r.exterior_mass = b.exterior_mass[i];
  std::vector<std::pair<std::size_t, double>> e;
  if (b.jump) {
    const std::size_t n_off = L.shift.size();
    const double* t = b.jump->data() + (b.jump_shared ? 0 : i * n_off);
    for (std::size_t j = 0; j < n_off; ++j) {
      const long k = L.node_at[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(L.position[i]) + L.shift[j])];
      if (k >= 0 && t[j] != 0.0) e.emplace_back(static_cast<std::size_t>(k), t[j]);
    }
  }
  const SparseRows& s = *b.local;
  for (std::size_t k = s.start[i]; k < s.start[i + 1]; ++k) e.emplace_back(s.column[k], s.value[k]);
  std::sort(e.begin(), e.end());
  for (const auto& [col, w] : e) {
    if (!r.targets.empty() && r.targets.back() == col) {
      r.weights.back() += w;
    } else {
      r.targets.push_back(col);
      r.weights.push_back(w);
    }
  }
  return r;
}

nlohmann::json stencil_json(const DiscreteOperator& op, const std::vector<std::size_t>& nodes) {
  const Grid& g = op.grid();
  nlohmann::json out;
  out["dimension"] = g.dimension();
  out["spacing"] = g.spacing();
  out["controls"] = nlohmann::json::array();
  for (std::size_t t = 0; t < op.controls(); ++t) out["controls"].push_back(op.label(t));
  std::vector<std::size_t> which = nodes;
  if (which.empty())
    for (std::size_t i = 0; i < g.size(); ++i) which.push_back(i);
  auto rows = nlohmann::json::array();
  for (std::size_t i : which) {
    const auto& m = g.lattice(i);
    for (std::size_t t = 0; t < op.controls(); ++t) {
      const StencilRow r = op.row(t, i);
      auto offsets = nlohmann::json::array();
      for (std::size_t k : r.targets) {
        const auto& mk = g.lattice(k);
        offsets.push_back({mk[0] - m[0], mk[1] - m[1]});
      }
      rows.push_back({{"node", i},
                      {"lattice", {m[0], m[1]}},
                      {"control", op.label(t)},
                      {"diagonal", r.diagonal},
                      {"zeroth", r.zeroth},
                      {"constant", r.constant},
                      {"exterior_mass", r.exterior_mass},
                      {"offsets", offsets},
                      {"weights", r.weights}});
    }
  }
  out["rows"] = rows;
  return out;
}

DiscreteOperator::Triplets DiscreteOperator::near_field(std::span<const int> policy, int reach) const {
  const auto& L = *layout_;
  const Grid& g = L.grid;
  Triplets out;
  auto push = [&](std::size_t i, std::size_t k, double w) {
    out.row.push_back(i);
    out.column.push_back(k);
    out.value.push_back(w);
  };
  auto close = [&](std::size_t i, std::size_t k) {
    const auto& a = g.lattice(i);
    const auto& b = g.lattice(k);
    return std::abs(a[0] - b[0]) <= reach && std::abs(a[1] - b[1]) <= reach;
  };
  const std::size_t n_off = L.shift.size();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& b = blocks_[policy[i]];
    push(i, i, b.diagonal[i] + b.zeroth[i]);
    if (b.jump) {
      const double* t = b.jump->data() + (b.jump_shared ? 0 : i * n_off);
      for (std::size_t j = 0; j < n_off; ++j) {
        const auto& m = L.offsets[j];
        if (std::abs(m[0]) > reach || std::abs(m[1]) > reach || t[j] == 0.0) continue;
        const long k = L.node_at[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(L.position[i]) + L.shift[j])];
        if (k >= 0) push(i, static_cast<std::size_t>(k), t[j]);
      }
    }
    const SparseRows& s = *b.local;
    for (std::size_t e = s.start[i]; e < s.start[i + 1]; ++e)
      if (close(i, s.column[e])) push(i, s.column[e], s.value[e]);
  }
  return out;
}

std::vector<double> pucci_extremal(const JumpQuadrature& q, const Grid& grid,
                                   std::span<const double> u, const ExteriorRule& ext,
                                   PucciSign sign, double lambda, double Lambda) {
  if (u.size() != grid.size()) throw std::invalid_argument("pucci: field size differs from grid size");
  const double up = sign == PucciSign::Plus ? Lambda : lambda;
  const double down = sign == PucciSign::Plus ? lambda : Lambda;
  const double scale = 2.0 - 2.0 * q.s;
  std::vector<double> out(grid.size());
  auto term = [&](double delta) {
    return delta > 0.0 ? up * delta : down * delta;
  };
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point& x = grid.node(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const Point& y = q.points[j];
      const double delta = evaluate_extended(grid, u, ext, x + y) +
                           evaluate_extended(grid, u, ext, x - y) - 2.0 * u[i];
      acc += q.weights[j] * term(delta);
    }
    for (const auto& tp : q.tail) {
      const double delta = evaluate_extended(grid, u, ext, x + tp.y) +
                           evaluate_extended(grid, u, ext, x - tp.y) - 2.0 * u[i];
      acc += tp.stable_weight * term(delta);
    }
    out[i] = scale * acc;
  }
  return out;
}

}  // namespace nlhjb
