#include "nlhjb/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nlhjb/operator.hpp"

namespace nlhjb {

std::vector<std::vector<double>> evaluate_LV_per_control(const ControlProblem& p, const Grid& grid,
                                                         const JumpQuadrature& q,
                                                         const LyapunovOptions& options) {
  if (!p.lyapunov || !p.lyapunov->value)
    throw std::invalid_argument("evaluate_LV: problem has no Lyapunov function");
  const LyapunovData& ly = *p.lyapunov;
  const std::size_t n = grid.size();

  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = ly.value(grid.node(i));
    if (!std::isfinite(v[i])) throw std::invalid_argument("evaluate_LV: V is not finite at a node");
  }

  AssemblyOptions jumps_only;
  jumps_only.drift = false;
  jumps_only.cost = false;
  jumps_only.zeroth = false;
  jumps_only.diffusion = false;
  const auto op = assemble(p, grid, q, ExteriorRule::function(ly.value), jumps_only);

  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < p.controls.size(); ++t) {
    const Control& c = p.controls[t];
    auto lv = op.apply(t, v);
    for (std::size_t i = 0; i < n; ++i) {
      const Point& x = grid.node(i);
      const bool need_gradient = c.drift || c.levy;
      if (need_gradient) {
        if (!ly.gradient) throw std::invalid_argument("evaluate_LV: V has no gradient");
        Point b = c.drift_at(x);
        if (c.levy) b = b - levy_compensator(c, q, x);
        const Point g = ly.gradient(x);
        lv[i] += b[0] * g[0] + (grid.dimension() == 2 ? b[1] * g[1] : 0.0);
      }
      if (c.diffusion) {
        if (!ly.hessian) throw std::invalid_argument("evaluate_LV: V has no Hessian");
        const Matrix2 a = c.diffusion(x);
        const Matrix2 H = ly.hessian(x);
        double tr = a[0] * H[0];
        if (grid.dimension() == 2) tr += a[1] * H[2] + a[2] * H[1] + a[3] * H[3];
        lv[i] += tr;
      }
      if (options.zeroth) lv[i] += c.zeroth_at(x) * v[i];
      if (!std::isfinite(lv[i])) throw std::invalid_argument("evaluate_LV: non-finite value");
    }
    out.push_back(std::move(lv));
  }
  return out;
}

std::vector<double> evaluate_LV(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                                const LyapunovOptions& options) {
  const auto per = evaluate_LV_per_control(p, grid, q, options);
  std::vector<double> out = per.front();
  for (std::size_t t = 1; t < per.size(); ++t)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], per[t][i]);
  return out;
}

double barrier_constant(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q,
                        bool with_zeroth) {
  LyapunovOptions opt;
  opt.zeroth = with_zeroth;
  const auto lv = evaluate_LV(p, grid, q, opt);
  double k0 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double g = 0.0;
    for (const auto& c : p.controls) g = std::max(g, std::abs(c.cost_at(grid.node(i))));
    k0 = std::max(k0, lv[i] + g);
  }
  return k0;
}

LyapunovCertificate fit_envelope(const std::vector<double>& values, const LyapunovData& lyap,
                                 const Grid& grid) {
  if (values.size() != grid.size()) throw std::invalid_argument("fit_envelope: size mismatch");
  LyapunovCertificate cert;
  cert.values = values;
  cert.exponent = lyap.envelope_exponent();
  cert.dimension = grid.dimension();
  cert.spacing = grid.spacing();
  cert.radius = grid.radius();
  const double p = cert.exponent;
  const std::size_t n = grid.size();

  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = std::pow(norm(grid.node(i)), p);

  // Least-squares slope of values against |x|^p on the outer half.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, m = 0.0;
  double outer_max = -std::numeric_limits<double>::infinity();
  double inner_max = -std::numeric_limits<double>::infinity();
  const double half = 0.5 * grid.radius();
  for (std::size_t i = 0; i < n; ++i) {
    if (norm(grid.node(i)) <= half) {
      inner_max = std::max(inner_max, values[i]);
      continue;
    }
    outer_max = std::max(outer_max, values[i]);
    sx += r[i];
    sy += values[i];
    sxx += r[i] * r[i];
    sxy += r[i] * values[i];
    m += 1.0;
  }
  const double var = sxx - sx * sx / m;
  const double slope = var > 0.0 ? -(sxy - sx * sy / m) / var : 0.0;
  cert.fitted_slope = slope;

  double k1 = 0.0;
  if (slope > 0.0) {
    k1 = 0.5 * slope;
  } else if (outer_max < 0.0) {
    k1 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (norm(grid.node(i)) > half && r[i] > 0.0) k1 = std::min(k1, -values[i] / r[i]);
  }

  if (k1 > 0.0 && std::isfinite(k1)) {
    cert.admissible = true;
    cert.k1 = k1;
    double k0 = 1e-12;
    for (std::size_t i = 0; i < n; ++i) k0 = std::max(k0, values[i] + k1 * r[i]);
    cert.k0 = k0;
    cert.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      cert.worst_margin = std::min(cert.worst_margin, k0 - k1 * r[i] - values[i]);
      if (values[i] + k1 * r[i] > k0) cert.violations.push_back(i);
    }
  } else {
    // No decay: every outer node at or above the inner maximum witnesses it.
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i] > values[argmax]) argmax = i;
      if (norm(grid.node(i)) > half && values[i] >= inner_max) cert.violations.push_back(i);
    }
    if (cert.violations.empty()) cert.violations.push_back(argmax);
    cert.worst_margin = -std::numeric_limits<double>::infinity();
  }
  return cert;
}

LyapunovCertificate certify(const ControlProblem& p, const Grid& grid, const JumpQuadrature& q) {
  const auto lv = evaluate_LV(p, grid, q);
  auto cert = fit_envelope(lv, *p.lyapunov, grid);
  cert.far_radius = q.far_radius;
  cert.s = q.s;
  return cert;
}

nlohmann::json certificate_json(const LyapunovCertificate& cert, const Grid& grid) {
  nlohmann::json j;
  j["scope"] = "inequality verified at grid nodes only";
  j["admissible"] = cert.admissible;
  j["exponent"] = cert.exponent;
  j["k0"] = cert.k0;
  j["k1"] = cert.k1;
  j["fitted_slope"] = cert.fitted_slope;
  j["worst_margin"] = std::isfinite(cert.worst_margin) ? nlohmann::json(cert.worst_margin) : nlohmann::json();
  j["tail_mode"] = cert.tail_mode;
  nlohmann::json viol = nlohmann::json::array();
  for (std::size_t i : cert.violations) {
    nlohmann::json v;
    v["node"] = i;
    v["x"] = grid.dimension() == 1 ? nlohmann::json(grid.node(i)[0])
                                   : nlohmann::json({grid.node(i)[0], grid.node(i)[1]});
    v["value"] = cert.values[i];
    viol.push_back(v);
  }
  j["violations"] = viol;
  j["grid"] = {{"dimension", cert.dimension}, {"spacing", cert.spacing}, {"radius", cert.radius},
               {"far_radius", cert.far_radius}, {"s", cert.s}, {"nodes", grid.size()}};
  return j;
}

}  // namespace nlhjb
