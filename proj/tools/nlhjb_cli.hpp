#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlhjb/ergodic.hpp"
#include "nlhjb/problem.hpp"

namespace nlhjb::cli {

/// Exit codes of a run.
enum ExitCode : int {
  kOk = 0,
  kInvalid = 1,          // config or problem validation failed
  kNotConverged = 2,     // a solver or driver flagged non-convergence
  kInvariantFailed = 3,  // converged, but a hard invariant check failed
};

/// Config validation failure; `path` is a JSON pointer to the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Mode { Discounted, Ergodic, Certify, ConvergenceStudy };

struct ControlConfig {
  std::string label;
  std::vector<std::string> drift;  // one expression per coordinate
  std::string cost = "0";
  std::string zeroth = "0";
  std::string kernel;  // k(x, y); may use x, y, r, ry and the constants
};

struct ProblemConfig {
  std::string family = "example";  // example, constant-cost, mixed-constant-cost, custom
  double gamma = 1.6;
  double theta = 0.1;
  double s = 0.9;
  double kappa = 0.0;
  double cost_shift = 0.0;
  ExampleOptions example;
  double lambda = 1.0;  // custom family ellipticity
  double Lambda = 1.0;
  std::map<std::string, double> constants;
  std::vector<ControlConfig> controls;
  std::optional<double> lyapunov_gamma;  // custom family: V = power_lyapunov(gamma)
  std::optional<double> lyapunov_theta;
};

struct StudyConfig {
  Mode base = Mode::Ergodic;  // discounted or ergodic
  int levels = 3;             // hx, hx/2, hx/4, ...
};

struct RunConfig {
  Mode mode = Mode::Ergodic;
  int dimension = 1;
  ProblemConfig problem;
  ExpansionOptions expansion;  // spacing, radii, far radius, tolerances, exterior
  double alpha = 0.5;                // discounted mode
  ErgodicOptions ergodic;            // expansion field is ignored; the one above is used
  bool uniqueness_probe = false;
  std::optional<std::vector<double>> probe_alphas;
  StudyConfig study;
  std::filesystem::path output = "nlhjb-out";
  std::vector<std::size_t> stencil_nodes;  // empty with dump_stencil: every node
  bool dump_stencil = false;
  nlohmann::json source;  // the parsed document, echoed into report.json
};

const char* to_string(Mode mode);

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the key. Every value is checked before anything is built.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& file);

/// Problem described by the config, for the config's dimension.
ControlProblem build_problem(const RunConfig& config);

struct RunResult {
  int exit_code = kOk;
  nlohmann::json report;    // deterministic body written to report.json
  nlohmann::json metadata;  // timings and environment, written to metadata.json
};

/// Executes the configured mode and writes report.json, metadata.json,
/// solution.csv, trace.csv and, in certify mode, certificate.json into the
/// output directory. Problem errors are caught and reported with exit code 1.
RunResult run(const RunConfig& config);

/// The configured solve at hx, hx/2, ... with pairwise inner-window sup
/// differences on the coarser grid and lambda deltas (ergodic base only).
nlohmann::json convergence_study(const RunConfig& config, int* exit_code = nullptr);

/// Machine-readable error block {"error": {"kind", "path", "message"}}.
nlohmann::json error_block(const std::string& kind, const std::string& path, const std::string& message);

/// 0: errors only, 1: one summary line per run, 2 and up: progress.
void set_verbosity(int level);

/// Command line entry point; returns the exit code.
int main_entry(int argc, char** argv);

}  // namespace nlhjb::cli
