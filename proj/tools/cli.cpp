#include "nlhjb_cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "nlhjb/discounted.hpp"
#include "nlhjb/expression.hpp"
#include "nlhjb/lyapunov.hpp"
#include "nlhjb/operator.hpp"

namespace nlhjb::cli {

using nlohmann::json;

namespace {

int verbosity = 1;

void log(int level, const std::string& message) {
  if (verbosity >= level) std::cerr << "[nlhjb] " << message << '\n';
}

// ---------------------------------------------------------------- parsing

// One JSON object; every read marks its key, finish() rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError(at(key), "expected a finite number");
    return x;
  }

  int integer(const std::string& key, int fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v->get<int>();
  }

  bool flag(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json* v = raw(key);
    if (!v) return {};
    if (!v->is_array() || v->empty()) throw ConfigError(at(key), "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw ConfigError(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::optional<Section> child(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return Section(*v, at(key));
  }

  void forbid(const std::string& key, const std::string& why) {
    if (has(key)) throw ConfigError(at(key), why);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

Mode parse_mode(const std::string& s, const std::string& path) {
  if (s == "discounted") return Mode::Discounted;
  if (s == "ergodic") return Mode::Ergodic;
  if (s == "certify") return Mode::Certify;
  if (s == "convergence-study") return Mode::ConvergenceStudy;
  throw ConfigError(path, "unknown mode '" + s + "' (discounted, ergodic, certify, convergence-study)");
}

void check_expression(const std::string& text, const std::map<std::string, double>& constants,
                      const std::string& path, bool allow_y) {
  try {
    const auto e = Expression::parse(text, constants);
    if (!allow_y && e.uses_y()) throw ConfigError(path, "expression may not use the jump offset y");
  } catch (const std::invalid_argument& err) {
    throw ConfigError(path, err.what());
  }
}

void parse_problem(Section& sec, RunConfig& cfg) {
  ProblemConfig& pc = cfg.problem;
  pc.family = sec.text("family", "example");
  pc.cost_shift = sec.number("cost_shift", 0.0);
  const std::string fam = pc.family;
  auto not_for = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) sec.forbid(k, "not a parameter of family '" + fam + "'");
  };

  if (fam == "example") {
    not_for({"kappa", "constants", "controls", "lyapunov"});
    pc.gamma = sec.number("gamma", 1.6);
    pc.theta = sec.number("theta", 0.1);
    pc.s = sec.number("s", 0.9);
    pc.example.lambda = sec.number("lambda", pc.example.lambda);
    pc.example.Lambda = sec.number("Lambda", pc.example.Lambda);
    pc.example.effort_cost = sec.number("effort_cost", pc.example.effort_cost);
    if (sec.has("cost_exponent")) pc.example.cost_exponent = sec.number("cost_exponent", 0.0);
    pc.example.outward_drift = sec.flag("outward_drift", false);
    require(pc.gamma > 0.0, sec.at("gamma"), "must be positive");
    require(pc.theta > 0.0, sec.at("theta"), "must be positive");
    require(pc.example.lambda > 0.0 && pc.example.Lambda >= pc.example.lambda, sec.at("Lambda"),
            "need 0 < lambda <= Lambda");
  } else if (fam == "constant-cost" || fam == "mixed-constant-cost") {
    not_for({"gamma", "theta", "lambda", "Lambda", "effort_cost", "cost_exponent", "outward_drift", "constants",
             "controls", "lyapunov"});
    if (fam == "mixed-constant-cost") not_for({"s"});
    pc.kappa = sec.number("kappa", 0.0);
    pc.s = fam == "constant-cost" ? sec.number("s", 0.75) : 0.75;
  } else if (fam == "custom") {
    not_for({"gamma", "theta", "effort_cost", "cost_exponent", "outward_drift", "kappa"});
    pc.s = sec.number("s", 0.75);
    pc.lambda = sec.number("lambda", 1.0);
    pc.Lambda = sec.number("Lambda", 1.0);
    require(pc.lambda > 0.0 && pc.Lambda >= pc.lambda, sec.at("Lambda"), "need 0 < lambda <= Lambda");
    if (auto c = sec.child("constants")) {
      const json& obj = *sec.raw("constants");
      for (auto it = obj.begin(); it != obj.end(); ++it) pc.constants[it.key()] = c->number(it.key(), 0.0);
      c->finish();
    }
    const json* controls = sec.raw("controls");
    require(controls && controls->is_array() && !controls->empty(), sec.at("controls"),
            "expected a non-empty array of controls");
    for (std::size_t t = 0; t < controls->size(); ++t) {
      Section cs((*controls)[t], sec.at("controls") + "/" + std::to_string(t));
      ControlConfig cc;
      cc.label = cs.text("label", "control" + std::to_string(t));
      cc.cost = cs.text("cost", "0");
      cc.kernel = cs.text("kernel", "");
      require(!cc.kernel.empty(), cs.at("kernel"), "kernel factor expression required");
      if (const json* d = cs.raw("drift")) {
        require(d->is_array() && d->size() == static_cast<std::size_t>(cfg.dimension), cs.at("drift"),
                "expected one expression per coordinate (" + std::to_string(cfg.dimension) + ")");
        for (std::size_t a = 0; a < d->size(); ++a) {
          require((*d)[a].is_string(), cs.at("drift") + "/" + std::to_string(a), "expected a string");
          cc.drift.push_back((*d)[a].get<std::string>());
          check_expression(cc.drift.back(), pc.constants, cs.at("drift") + "/" + std::to_string(a), false);
        }
      }
      check_expression(cc.cost, pc.constants, cs.at("cost"), false);
      check_expression(cc.kernel, pc.constants, cs.at("kernel"), true);
      cs.finish();
      pc.controls.push_back(std::move(cc));
    }
    if (auto ly = sec.child("lyapunov")) {
      pc.lyapunov_gamma = ly->number("gamma", 1.6);
      if (ly->has("theta")) pc.lyapunov_theta = ly->number("theta", 0.0);
      require(*pc.lyapunov_gamma > 0.0, ly->at("gamma"), "must be positive");
      ly->finish();
    }
  } else {
    throw ConfigError(sec.at("family"),
                      "unknown family '" + fam + "' (example, constant-cost, mixed-constant-cost, custom)");
  }
  if (fam != "mixed-constant-cost")
    require(pc.s > 0.5 && pc.s < 1.0, sec.at("s"), "fractional order must lie in (1/2, 1)");
  sec.finish();
}

ExteriorRule parse_exterior(Section& sec, const std::string& key, ExteriorRule fallback) {
  const json* v = sec.raw(key);
  if (!v) return fallback;
  if (v->is_string()) {
    const auto k = v->get<std::string>();
    if (k == "zero") return ExteriorRule::zero();
    if (k == "boundary") return ExteriorRule::boundary();
    throw ConfigError(sec.at(key), "unknown exterior rule '" + k + "' (zero, boundary, {\"constant\": c})");
  }
  Section e(*v, sec.at(key));
  const double c = e.number("constant", 0.0);
  require(e.has("constant"), e.at("constant"), "constant value required");
  e.finish();
  return ExteriorRule::constant(c);
}

bool uses_section(Mode mode, const StudyConfig& study, Mode section) {
  return mode == section || (mode == Mode::ConvergenceStudy && study.base == section);
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Discounted: return "discounted";
    case Mode::Ergodic: return "ergodic";
    case Mode::Certify: return "certify";
    case Mode::ConvergenceStudy: return "convergence-study";
  }
  return "?";
}

json error_block(const std::string& kind, const std::string& path, const std::string& message) {
  return {{"error", {{"kind", kind}, {"path", path}, {"message", message}}}};
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  cfg.source = j;
  Section root(j, "");
  require(root.has("mode"), "/mode", "required");
  cfg.mode = parse_mode(root.text("mode", ""), "/mode");

  if (auto st = root.child("study")) {
    require(cfg.mode == Mode::ConvergenceStudy, "/study", "only used in convergence-study mode");
    cfg.study.base = parse_mode(st->text("base", "ergodic"), "/study/base");
    require(cfg.study.base == Mode::Discounted || cfg.study.base == Mode::Ergodic, "/study/base",
            "base mode must be discounted or ergodic");
    cfg.study.levels = st->integer("levels", 3);
    require(cfg.study.levels >= 2 && cfg.study.levels <= 6, "/study/levels", "must be between 2 and 6");
    st->finish();
  }

  // Grid first: the dimension shapes the problem section.
  ExpansionOptions& ex = cfg.expansion;
  ex.radii = {8.0, 16.0};
  const bool ergodic_like = uses_section(cfg.mode, cfg.study, Mode::Ergodic);
  ExteriorRule default_exterior = ergodic_like ? ExteriorRule::boundary() : ExteriorRule::zero();
  if (auto g = root.child("grid")) {
    cfg.dimension = g->integer("dimension", 1);
    require(cfg.dimension == 1 || cfg.dimension == 2, "/grid/dimension", "must be 1 or 2");
    ex.spacing = g->number("spacing", 0.25);
    require(ex.spacing > 0.0, "/grid/spacing", "must be positive");
    if (g->has("radii")) ex.radii = g->numbers("radii");
    for (std::size_t k = 0; k < ex.radii.size(); ++k) {
      const std::string path = "/grid/radii/" + std::to_string(k);
      require(ex.radii[k] >= 4.0 * ex.spacing, path, "radius must be at least 4 * spacing");
      require(k == 0 || ex.radii[k] > ex.radii[k - 1], path, "radii must increase strictly");
    }
    ex.far_scale = g->number("far_scale", ex.far_scale);
    require(ex.far_scale >= 1.0, "/grid/far_scale", "must be at least 1");
    ex.fixed_far_radius = g->number("far_radius", 0.0);
    if (g->has("far_radius"))
      require(ex.fixed_far_radius >= ex.radii.back() + 1.0, "/grid/far_radius",
              "must be at least the largest radius + 1");
    ex.inner_radius = g->number("inner_radius", 0.0);
    require(ex.inner_radius >= 0.0 && ex.inner() <= ex.radii.front(), "/grid/inner_radius",
            "must lie in [0, first radius]");
    ex.tail.angles = g->integer("tail_angles", ex.tail.angles);
    require(ex.tail.angles >= 4 && ex.tail.angles % 2 == 0, "/grid/tail_angles", "must be even and at least 4");
    ex.exterior = parse_exterior(*g, "exterior", default_exterior);
    g->finish();
  } else {
    ex.exterior = default_exterior;
  }

  {
    Section empty(json::object(), "/problem");
    auto p = root.child("problem");
    parse_problem(p ? *p : empty, cfg);
  }

  if (auto s = root.child("solver")) {
    ex.solver.tol = s->number("tol", ex.solver.tol);
    require(ex.solver.tol > 0.0, "/solver/tol", "must be positive");
    ex.solver.max_iter = s->integer("max_iter", ex.solver.max_iter);
    require(ex.solver.max_iter >= 1, "/solver/max_iter", "must be at least 1");
    ex.solver.linear_max_iter = s->integer("linear_max_iter", ex.solver.linear_max_iter);
    require(ex.solver.linear_max_iter >= 1, "/solver/linear_max_iter", "must be at least 1");
    ex.solver.value_iteration_fallback = s->flag("value_iteration_fallback", ex.solver.value_iteration_fallback);
    ex.solver.value_max_iter = s->integer("value_max_iter", ex.solver.value_max_iter);
    require(ex.solver.value_max_iter >= 1, "/solver/value_max_iter", "must be at least 1");
    s->finish();
  }

  if (auto d = root.child("discounted")) {
    require(uses_section(cfg.mode, cfg.study, Mode::Discounted), "/discounted",
            std::string("not used in ") + to_string(cfg.mode) + " mode");
    cfg.alpha = d->number("alpha", cfg.alpha);
    require(cfg.alpha > 0.0, "/discounted/alpha", "must be positive");
    ex.tol = d->number("domain_tol", ex.tol);
    require(ex.tol > 0.0, "/discounted/domain_tol", "must be positive");
    d->finish();
  }

  ErgodicOptions& eo = cfg.ergodic;
  if (auto e = root.child("ergodic")) {
    require(ergodic_like, "/ergodic", std::string("not used in ") + to_string(cfg.mode) + " mode");
    if (e->has("alphas")) eo.alphas = e->numbers("alphas");
    for (std::size_t k = 0; k < eo.alphas.size(); ++k) {
      const std::string path = "/ergodic/alphas/" + std::to_string(k);
      require(eo.alphas[k] > 0.0 && eo.alphas[k] < 1.0, path, "discount must lie in (0, 1)");
      require(k == 0 || eo.alphas[k] < eo.alphas[k - 1], path, "discounts must decrease strictly");
    }
    eo.alpha_start = e->number("alpha_start", eo.alpha_start);
    eo.alpha_ratio = e->number("alpha_ratio", eo.alpha_ratio);
    eo.min_alpha = e->number("min_alpha", eo.min_alpha);
    require(eo.alpha_start > 0.0 && eo.alpha_start < 1.0, "/ergodic/alpha_start", "must lie in (0, 1)");
    require(eo.alpha_ratio > 0.0 && eo.alpha_ratio < 1.0, "/ergodic/alpha_ratio", "must lie in (0, 1)");
    require(eo.min_alpha > 0.0 && eo.min_alpha <= eo.alpha_start, "/ergodic/min_alpha",
            "must lie in (0, alpha_start]");
    eo.tol = e->number("tol", eo.tol);
    require(eo.tol > 0.0, "/ergodic/tol", "must be positive");
    ex.tol = e->number("domain_tol", ex.tol);
    require(ex.tol > 0.0, "/ergodic/domain_tol", "must be positive");
    eo.bar_w_ball = e->number("bar_w_ball", eo.bar_w_ball);
    require(eo.bar_w_ball >= 0.0, "/ergodic/bar_w_ball", "must be nonnegative");
    eo.growth_rays = e->integer("growth_rays", eo.growth_rays);
    require(eo.growth_rays >= 1, "/ergodic/growth_rays", "must be at least 1");
    cfg.uniqueness_probe = e->flag("uniqueness_probe", false);
    if (e->has("probe_alphas")) {
      require(cfg.uniqueness_probe, "/ergodic/probe_alphas", "needs uniqueness_probe: true");
      cfg.probe_alphas = e->numbers("probe_alphas");
      for (std::size_t k = 0; k < cfg.probe_alphas->size(); ++k) {
        const double a = (*cfg.probe_alphas)[k];
        const std::string path = "/ergodic/probe_alphas/" + std::to_string(k);
        require(a > 0.0 && a < 1.0, path, "discount must lie in (0, 1)");
        require(k == 0 || a < (*cfg.probe_alphas)[k - 1], path, "discounts must decrease strictly");
      }
    }
    e->finish();
  }
  if (ergodic_like) ex.normalized = true;
  eo.expansion = ex;

  if (auto o = root.child("output")) {
    cfg.output = o->text("directory", cfg.output.string());
    require(!cfg.output.empty(), "/output/directory", "must not be empty");
    if (const json* st = o->raw("stencil")) {
      require(cfg.mode != Mode::Certify, "/output/stencil", "no operator is assembled in certify mode");
      cfg.dump_stencil = true;
      if (st->is_boolean()) {
        cfg.dump_stencil = st->get<bool>();
      } else {
        require(st->is_array(), "/output/stencil", "expected true, false or an array of node indices");
        for (std::size_t k = 0; k < st->size(); ++k) {
          require((*st)[k].is_number_integer() && (*st)[k].get<long long>() >= 0,
                  "/output/stencil/" + std::to_string(k), "expected a node index");
          cfg.stencil_nodes.push_back((*st)[k].get<std::size_t>());
        }
      }
    }
    o->finish();
  }
  root.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("/", "cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

ControlProblem build_problem(const RunConfig& cfg) {
  const ProblemConfig& pc = cfg.problem;
  const int d = cfg.dimension;
  ControlProblem p;
  if (pc.family == "example") {
    p = power_drift_problem(pc.gamma, pc.theta, d, pc.s, pc.example);
  } else if (pc.family == "constant-cost") {
    p = constant_cost_problem(pc.kappa, d, pc.s);
  } else if (pc.family == "mixed-constant-cost") {
    p = mixed_constant_cost_problem(pc.kappa, d);
  } else {
    p.family = "custom";
    p.dimension = d;
    p.kernel.s = pc.s;
    p.kernel.lambda = pc.lambda;
    p.kernel.Lambda = pc.Lambda;
    p.parameters = pc.constants;
    for (const auto& cc : pc.controls) {
      Control c;
      c.label = cc.label;
      const auto k = Expression::parse(cc.kernel, pc.constants);
      c.kernel = [k](const Point& x, const Point& y) { return k(x, y); };
      c.kernel_translation_invariant = !k.uses_x();
      if (!cc.drift.empty()) {
        std::vector<Expression> b;
        for (const auto& e : cc.drift) b.push_back(Expression::parse(e, pc.constants));
        c.drift = [b](const Point& x) { return Point{b[0](x), b.size() > 1 ? b[1](x) : 0.0}; };
      }
      const auto g = Expression::parse(cc.cost, pc.constants);
      c.cost = [g](const Point& x) { return g(x); };
      p.controls.push_back(std::move(c));
    }
    if (pc.lyapunov_gamma) {
      p.lyapunov = power_lyapunov(*pc.lyapunov_gamma);
      p.lyapunov->theta = pc.lyapunov_theta;
    }
  }
  if (pc.cost_shift != 0.0) p = with_cost_shift(p, pc.cost_shift);
  return p;
}

namespace {

// ---------------------------------------------------------------- running

struct Outcome {
  int exit_code = kOk;
  json report;
  std::optional<Grid> grid;
  std::vector<double> field;
  std::optional<double> lambda;
  std::string trace_csv;
  std::string extra_csv_name;
  std::string extra_csv;
  std::optional<json> certificate;
  std::optional<json> stencil;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

std::string field_csv(const Grid& g, const std::vector<double>& values, const std::string& column) {
  std::ostringstream out;
  out << (g.dimension() == 1 ? "x1," : "x1,x2,") << column << '\n';
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << fmt(g.node(i)[0]) << ',';
    if (g.dimension() == 2) out << fmt(g.node(i)[1]) << ',';
    out << fmt(values[i]) << '\n';
  }
  return out.str();
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(); }
json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(); }

struct Invariants {
  json list = json::array();
  bool hard_ok = true;

  void add(const std::string& name, bool passed, bool hard, json detail = json::object()) {
    detail["name"] = name;
    detail["passed"] = passed;
    detail["hard"] = hard;
    list.push_back(std::move(detail));
    if (hard && !passed) hard_ok = false;
  }
};

json checks_json(const ValidationReport& r) {
  json out = json::array();
  for (const auto& c : r.checks)
    out.push_back({{"name", c.name}, {"passed", c.passed}, {"proxy", c.proxy}, {"worst", number_or_null(c.worst)},
                   {"detail", c.detail}});
  return out;
}

// Failed structural checks reject the problem; growth ratios and proxies are reported only.
std::vector<std::string> hard_failures(const ValidationReport& r) {
  std::vector<std::string> out;
  for (const auto& c : r.checks) {
    const bool soft = c.proxy || (c.name.size() > 6 && c.name.ends_with("_ratio"));
    if (!c.passed && !soft) out.push_back(c.name);
  }
  return out;
}

Outcome invalid_problem(const std::string& message) {
  Outcome o;
  o.exit_code = kInvalid;
  o.report = error_block("problem", "/problem", message);
  o.report["status"] = "invalid";
  return o;
}

std::optional<Outcome> validate(const ControlProblem& p, ExpansionWorkspace& ws, json& report) {
  auto& L = ws.level(0);
  const auto v = validate_problem(p, L.grid, L.quadrature.points);
  report["problem_checks"] = checks_json(v);
  const auto failed = hard_failures(v);
  if (failed.empty()) return std::nullopt;
  std::string names;
  for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
  auto o = invalid_problem("structural checks failed: " + names);
  o.report["problem_checks"] = report["problem_checks"];
  return o;
}

json domain_trace_json(const std::vector<DomainLevel>& trace) {
  json out = json::array();
  for (const auto& l : trace)
    out.push_back({{"radius", l.radius}, {"nodes", l.nodes}, {"inner_change", optional_json(l.inner_change)},
                   {"residual", l.residual}, {"iterations", l.iterations}, {"converged", l.converged}});
  return out;
}

json base_report(const RunConfig& cfg, const ControlProblem& p, Mode mode) {
  json r;
  r["mode"] = to_string(mode);
  r["family"] = p.family;
  r["dimension"] = cfg.dimension;
  r["spacing"] = cfg.expansion.spacing;
  r["radii"] = cfg.expansion.radii;
  r["exterior"] = to_string(cfg.expansion.exterior.kind());
  r["s"] = p.kernel.s;
  return r;
}

void finish_status(Outcome& o, bool converged, const Invariants& inv) {
  o.report["invariants"] = inv.list;
  o.exit_code = !converged ? kNotConverged : inv.hard_ok ? kOk : kInvariantFailed;
  o.report["status"] = o.exit_code == kOk ? "ok" : o.exit_code == kNotConverged ? "not-converged" : "invariant-failed";
  o.report["exit_code"] = o.exit_code;
}

std::optional<json> stencil_dump(const RunConfig& cfg, const DiscreteOperator& op) {
  if (!cfg.dump_stencil) return std::nullopt;
  for (std::size_t i : cfg.stencil_nodes)
    if (i >= op.size()) throw ConfigError("/output/stencil", "node index " + std::to_string(i) + " out of range");
  return stencil_json(op, cfg.stencil_nodes);
}

Outcome run_discounted(const RunConfig& cfg, const ControlProblem& p) {
  Outcome o;
  o.report = base_report(cfg, p, Mode::Discounted);
  o.report["alpha"] = cfg.alpha;
  const ControlProblem pd = with_discount(p, cfg.alpha);
  ExpansionWorkspace ws(p, cfg.expansion);
  if (auto bad = validate(pd, ws, o.report)) return *bad;

  log(2, "discounted solve, alpha = " + fmt(cfg.alpha));
  const auto r = expand_domain(ws, cfg.alpha);
  auto& L = ws.level(r.level);
  const auto& sol = r.solution;
  const double w0 = sol.w[L.grid.origin_index()];

  o.report["radius"] = L.grid.radius();
  o.report["nodes"] = L.grid.size();
  o.report["far_radius"] = L.quadrature.far_radius;
  o.report["w_origin"] = w0;
  o.report["lambda_alpha"] = cfg.alpha * w0;
  double sup = 0.0;
  for (double w : sol.w) sup = std::max(sup, std::abs(w));
  o.report["sup_norm"] = sup;
  o.report["solver"] = {{"method", sol.method}, {"iterations", sol.iterations}, {"residual", sol.residual_inf_norm},
                        {"converged", sol.converged}};
  o.report["domain"] = {{"stabilized", r.stabilized}, {"last_change", r.last_change}, {"tol", cfg.expansion.tol},
                        {"trace", domain_trace_json(r.trace)}};

  Invariants inv;
  inv.add("residual", sol.residual_inf_norm <= cfg.expansion.solver.tol, true,
          {{"value", sol.residual_inf_norm}, {"tol", cfg.expansion.solver.tol}});
  inv.add("monotone_iterates", sol.monotone_violation <= 1e-9, true, {{"value", sol.monotone_violation}});
  if (cfg.expansion.exterior.kind() == ExteriorRule::Kind::Zero) {
    const auto sup = check_sup_bound(sol, pd, L.grid);
    inv.add("sup_bound", sup.passed, true, {{"min_margin", sup.min_margin}, {"c_circ", sup.c_circ}});
    if (pd.lyapunov) {
      ControlProblem withk = pd;
      withk.lyapunov->k0 = barrier_constant(pd, L.grid, L.quadrature, false);
      const auto bar = check_barrier(sol, withk, L.grid);
      inv.add("barrier", bar.passed, true,
              {{"k0", bar.k0}, {"c_circ", bar.c_circ}, {"min_margin", bar.min_margin},
               {"violations", bar.violations.size()}});
    }
  }
  finish_status(o, sol.converged && r.stabilized, inv);

  std::ostringstream tr;
  tr << "radius,nodes,inner_change,residual,iterations,converged\n";
  for (const auto& l : r.trace)
    tr << fmt(l.radius) << ',' << l.nodes << ',' << fmt(l.inner_change) << ',' << fmt(l.residual) << ','
       << l.iterations << ',' << (l.converged ? 1 : 0) << '\n';
  o.trace_csv = tr.str();
  o.stencil = stencil_dump(cfg, L.op);
  o.grid = L.grid;
  o.field = sol.w;
  return o;
}

Outcome run_ergodic(const RunConfig& cfg, const ControlProblem& p) {
  Outcome o;
  o.report = base_report(cfg, p, Mode::Ergodic);
  ErgodicOptions eo = cfg.ergodic;
  eo.expansion = cfg.expansion;
  ExpansionWorkspace ws(p, cfg.expansion);
  if (auto bad = validate(p, ws, o.report)) return *bad;

  log(2, "vanishing discount over " + std::to_string(eo.schedule().size()) + " discounts");
  const auto sol = vanishing_discount(ws, eo);
  if (!sol.grid) throw std::logic_error("ergodic driver returned no grid");
  auto& L = ws.level(sol.level);

  o.report["lambda_star"] = sol.lambda_star;
  o.report["converged"] = sol.converged;
  o.report["ergodic_residual"] = sol.ergodic_residual;
  o.report["tol"] = eo.tol;
  o.report["inner_radius"] = sol.inner_radius;
  o.report["radius"] = sol.grid->radius();
  o.report["nodes"] = sol.grid->size();
  json trace = json::array();
  for (const auto& a : sol.alpha_trace)
    trace.push_back({{"alpha", a.alpha}, {"lambda", a.lambda}, {"lambda_change", optional_json(a.lambda_change)},
                     {"potential_change", optional_json(a.potential_change)},
                     {"ergodic_residual", a.ergodic_residual}, {"radius", a.radius},
                     {"domain_stabilized", a.domain_stabilized}, {"solver_converged", a.solver_converged},
                     {"w_origin", a.w_origin}, {"lambda_bound", optional_json(a.lambda_bound)},
                     {"lambda_bound_ok", a.lambda_bound_ok}});
  o.report["alpha_trace"] = trace;

  Invariants inv;
  const auto pair = cfg.uniqueness_probe
                        ? verify_ergodic_pair(sol, ws, eo,
                                              cfg.probe_alphas ? std::optional<ErgodicOptions>([&] {
                                                auto alt = eo;
                                                alt.alphas = *cfg.probe_alphas;
                                                return alt;
                                              }())
                                                               : std::nullopt)
                        : verify_ergodic_pair(sol.u, sol.lambda_star, L.op, sol.inner_radius, eo.tol);
  inv.add("ergodic_residual", pair.residual_ok, true, {{"value", pair.residual}, {"tol", eo.tol}});
  inv.add("normalized", pair.normalized, true);
  if (cfg.uniqueness_probe)
    inv.add("uniqueness_probe", pair.unique_ok, true,
            {{"lambda_difference", optional_json(pair.lambda_difference)},
             {"potential_difference", optional_json(pair.potential_difference)}, {"bound", 5.0 * eo.tol}});
  if (p.lyapunov) {
    const bool bounded = std::all_of(sol.alpha_trace.begin(), sol.alpha_trace.end(),
                                     [](const AlphaRecord& a) { return a.lambda_bound_ok; });
    inv.add("lambda_alpha_bound", bounded, true);
    if (sol.snapshots.size() >= 2) {
      const double ball = eo.bar_w_ball > 0.0 ? eo.bar_w_ball : sol.inner_radius;
      const auto bw = check_bar_w_bound(sol.snapshots, ws, ball);
      inv.add("bar_w_bound", bw.passed, true, {{"ball_radius", bw.ball_radius}, {"bounded", bw.bounded}});
    }
    inv.add("growth_below_V", sol.growth.nonincreasing, false, {{"note", sol.growth.note}});
  }
  finish_status(o, sol.converged, inv);

  std::ostringstream tr;
  tr << "alpha,lambda,lambda_change,potential_change,ergodic_residual,radius,domain_stabilized,lambda_bound\n";
  for (const auto& a : sol.alpha_trace)
    tr << fmt(a.alpha) << ',' << fmt(a.lambda) << ',' << fmt(a.lambda_change) << ',' << fmt(a.potential_change)
       << ',' << fmt(a.ergodic_residual) << ',' << fmt(a.radius) << ',' << (a.domain_stabilized ? 1 : 0) << ','
       << fmt(a.lambda_bound) << '\n';
  o.trace_csv = tr.str();
  o.stencil = stencil_dump(cfg, L.op);
  o.grid = *sol.grid;
  o.field = sol.u;
  o.lambda = sol.lambda_star;
  return o;
}

Outcome run_certify(const RunConfig& cfg, const ControlProblem& p) {
  Outcome o;
  o.report = base_report(cfg, p, Mode::Certify);
  if (!p.lyapunov) return invalid_problem("certify mode needs a problem with a Lyapunov function");
  if (!p.lyapunov->theta) return invalid_problem("certify mode needs the envelope exponent (lyapunov.theta)");
  const double R = cfg.expansion.radii.back();
  const Grid g = Grid::build(cfg.dimension, cfg.expansion.spacing, R);
  const auto q = build_quadrature(g, p.kernel.s, cfg.expansion.far_radius(R), cfg.expansion.tail);
  const auto v = validate_problem(p, g, q.points);
  o.report["problem_checks"] = checks_json(v);
  if (const auto failed = hard_failures(v); !failed.empty()) {
    auto bad = invalid_problem("structural checks failed: " + failed.front());
    bad.report["problem_checks"] = o.report["problem_checks"];
    return bad;
  }
  const auto cert = certify(p, g, q);
  o.certificate = certificate_json(cert, g);
  o.report["radius"] = R;
  o.report["far_radius"] = q.far_radius;
  o.report["certificate"] = {{"admissible", cert.admissible}, {"k0", cert.k0}, {"k1", cert.k1},
                             {"exponent", cert.exponent}, {"violations", cert.violations.size()},
                             {"worst_margin", number_or_null(cert.worst_margin)}};
  Invariants inv;
  inv.add("lyapunov_envelope", cert.admissible && cert.violations.empty(), true,
          {{"violations", cert.violations.size()}});
  finish_status(o, true, inv);
  o.extra_csv_name = "lv.csv";
  o.extra_csv = field_csv(g, cert.values, "LV");
  return o;
}

Outcome dispatch(const RunConfig& cfg, Mode mode) {
  ControlProblem p;
  try {
    p = build_problem(cfg);
  } catch (const ProblemError& e) {
    return invalid_problem(e.what());
  }
  try {
    switch (mode) {
      case Mode::Discounted: return run_discounted(cfg, p);
      case Mode::Ergodic: return run_ergodic(cfg, p);
      case Mode::Certify: return run_certify(cfg, p);
      case Mode::ConvergenceStudy: break;
    }
  } catch (const ProblemError& e) {
    return invalid_problem(e.what());
  }
  throw std::logic_error("dispatch: unexpected mode");
}

// Sup of |va - vb| over nodes of the coarse grid a inside the window; every
// node of a is a node of the refined grid b.
double coarse_difference(const Grid& a, const std::vector<double>& va, const Grid& b, const std::vector<double>& vb,
                         double radius) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (norm(a.node(i)) > radius) continue;
    const auto j = b.index_of(b.round(a.node(i)));
    if (!j) throw std::logic_error("convergence study: coarse node missing from the refined grid");
    m = std::max(m, std::abs(va[i] - vb[*j]));
  }
  return m;
}

Outcome run_study(const RunConfig& cfg, std::vector<Outcome>* levels_out = nullptr) {
  std::vector<Outcome> runs;
  json levels = json::array();
  for (int k = 0; k < cfg.study.levels; ++k) {
    RunConfig sub = cfg;
    sub.expansion.spacing = cfg.expansion.spacing / std::pow(2.0, k);
    sub.ergodic.expansion.spacing = sub.expansion.spacing;
    sub.dump_stencil = false;
    log(1, "convergence study: level " + std::to_string(k) + ", spacing " + fmt(sub.expansion.spacing));
    auto r = dispatch(sub, cfg.study.base);
    if (r.exit_code != kOk) {
      Outcome fail;
      fail.exit_code = r.exit_code;
      fail.report = r.report;
      fail.report["study_level"] = k;
      fail.report["mode"] = to_string(Mode::ConvergenceStudy);
      return fail;
    }
    json summary = {{"spacing", sub.expansion.spacing}, {"nodes", r.grid->size()}, {"status", r.report["status"]}};
    if (r.lambda) summary["lambda_star"] = *r.lambda;
    levels.push_back(summary);
    runs.push_back(std::move(r));
  }

  Outcome o;
  ControlProblem p = build_problem(cfg);
  o.report = base_report(cfg, p, Mode::ConvergenceStudy);
  o.report["base"] = to_string(cfg.study.base);
  o.report["levels"] = levels;
  o.report["inner_radius"] = cfg.expansion.inner();
  json pairs = json::array();
  std::ostringstream tr;
  tr << "coarse_spacing,fine_spacing,inner_difference,lambda_delta\n";
  for (std::size_t a = 0; a < runs.size(); ++a)
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      const double diff = coarse_difference(*runs[a].grid, runs[a].field, *runs[b].grid, runs[b].field,
                                            cfg.expansion.inner());
      json pr = {{"coarse", a}, {"fine", b}, {"inner_difference", diff}};
      std::optional<double> dl;
      if (runs[a].lambda && runs[b].lambda) dl = std::abs(*runs[a].lambda - *runs[b].lambda);
      pr["lambda_delta"] = optional_json(dl);
      pairs.push_back(pr);
      tr << fmt(levels[a]["spacing"].get<double>()) << ',' << fmt(levels[b]["spacing"].get<double>()) << ','
         << fmt(diff) << ',' << fmt(dl) << '\n';
    }
  o.report["pairs"] = pairs;
  o.report["note"] = "differences recorded as observed; no extrapolation or rate is claimed";
  o.report["status"] = "ok";
  o.report["exit_code"] = kOk;
  o.trace_csv = tr.str();
  o.grid = runs.back().grid;
  o.field = runs.back().field;
  o.lambda = runs.back().lambda;
  if (levels_out) *levels_out = std::move(runs);
  return o;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

nlohmann::json convergence_study(const RunConfig& config, int* exit_code) {
  auto o = run_study(config);
  if (exit_code) *exit_code = o.exit_code;
  return o.report;
}

RunResult run(const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o = config.mode == Mode::ConvergenceStudy ? run_study(config) : dispatch(config, config.mode);
  o.report["config"] = config.source;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunResult result;
  result.exit_code = o.exit_code;
  result.report = o.report;
  result.metadata = {{"started_utc", utc_now()}, {"wall_seconds", seconds}, {"workers", worker_count()},
                     {"exit_code", o.exit_code}};

  std::filesystem::create_directories(config.output);
  write_file(config.output / "report.json", result.report.dump(2) + "\n");
  write_file(config.output / "metadata.json", result.metadata.dump(2) + "\n");
  if (o.grid) write_file(config.output / "solution.csv", field_csv(*o.grid, o.field, "u"));
  if (!o.trace_csv.empty()) write_file(config.output / "trace.csv", o.trace_csv);
  if (!o.extra_csv.empty()) write_file(config.output / o.extra_csv_name, o.extra_csv);
  if (o.certificate) write_file(config.output / "certificate.json", o.certificate->dump(2) + "\n");
  if (o.stencil) write_file(config.output / "stencil.json", o.stencil->dump(1) + "\n");
  char elapsed[32];
  std::snprintf(elapsed, sizeof elapsed, "%.2f s", seconds);
  log(1, std::string(to_string(config.mode)) + ": " + result.report.value("status", std::string("?")) +
             " (exit " + std::to_string(o.exit_code) + ", " + elapsed + ")");
  return result;
}

void set_verbosity(int level) { verbosity = level; }

int main_entry(int argc, char** argv) {
  CLI::App app{"Monotone solver for nonlocal discounted and ergodic HJB equations"};
  std::string config_path, output;
  int workers = 0, verbose = 0;
  bool quiet = false, check_only = false;
  app.add_option("config", config_path, "Run configuration (JSON)")->required();
  app.add_option("-o,--output", output, "Output directory (overrides output.directory)");
  app.add_option("-j,--workers", workers, "Worker thread cap (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", verbose, "More progress output (repeatable)");
  app.add_flag("-q,--quiet", quiet, "Only errors");
  app.add_flag("--check", check_only, "Validate the config and exit");
  CLI11_PARSE(app, argc, argv);

  verbosity = quiet ? 0 : 1 + verbose;
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#endif
  try {
    RunConfig cfg = load_config(config_path);
    if (!output.empty()) cfg.output = output;
    if (check_only) {
      std::cout << json{{"valid", true}, {"mode", to_string(cfg.mode)}}.dump() << '\n';
      return kOk;
    }
    const auto r = run(cfg);
    if (r.report.contains("error")) std::cout << json{{"error", r.report["error"]}}.dump() << '\n';
    return r.exit_code;
  } catch (const ConfigError& e) {
    std::cout << error_block("config", e.path(), e.what()).dump() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cout << error_block("runtime", "", e.what()).dump() << '\n';
    return kInvalid;
  }
}

}  // namespace nlhjb::cli
