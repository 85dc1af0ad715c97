#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "nlhjb_cli.hpp"

using nlohmann::json;
using namespace nlhjb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  cli::set_verbosity(0);
  const fs::path p = fs::temp_directory_path() / ("nlhjb-cli-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json with_output(json j, const fs::path& dir) {
  j["output"]["directory"] = dir.string();
  return j;
}

json constant_ergodic(double kappa) {
  return {{"mode", "ergodic"},
          {"problem", {{"family", "constant-cost"}, {"kappa", kappa}}},
          {"grid", {{"spacing", 0.5}, {"radii", {4, 8}}}}};
}

json example_certify(bool outward) {
  return {{"mode", "certify"},
          {"problem", {{"family", "example"}, {"gamma", 1.6}, {"theta", 0.1}, {"s", 0.9}, {"outward_drift", outward}}},
          {"grid", {{"spacing", 0.25}, {"radii", {32}}, {"far_radius", 64}}}};
}

std::string config_error_path(const json& j) {
  try {
    cli::parse_config(j);
  } catch (const cli::ConfigError& e) {
    return e.path();
  }
  return "";
}

// Runs main_entry on a config file, capturing stdout.
int run_main(const json& config, const fs::path& dir, std::string& out) {
  fs::create_directories(dir);
  const fs::path file = dir / "config.json";
  std::ofstream(file) << config.dump(2);
  std::string a0 = "nlhjb", a1 = file.string(), a2 = "-q", a3 = "-o", a4 = (dir / "out").string();
  char* argv[] = {a0.data(), a1.data(), a2.data(), a3.data(), a4.data()};
  std::ostringstream capture;
  auto* old = std::cout.rdbuf(capture.rdbuf());
  const int code = cli::main_entry(5, argv);
  std::cout.rdbuf(old);
  out = capture.str();
  return code;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("unknown keys are rejected with their path") {
  auto j = constant_ergodic(1.0);
  j["colour"] = "blue";
  CHECK(config_error_path(j) == "/colour");
  j = constant_ergodic(1.0);
  j["grid"]["spcing"] = 0.5;
  CHECK(config_error_path(j) == "/grid/spcing");
  j = constant_ergodic(1.0);
  j["ergodic"] = {{"tolerance", 1e-6}};
  CHECK(config_error_path(j) == "/ergodic/tolerance");
}

TEST_CASE("values are range-checked before anything is built") {
  auto j = constant_ergodic(1.0);
  j["grid"]["spacing"] = -0.5;
  CHECK(config_error_path(j) == "/grid/spacing");
  j = constant_ergodic(1.0);
  j["grid"]["radii"] = {8, 4};
  CHECK(config_error_path(j) == "/grid/radii/1");
  j = constant_ergodic(1.0);
  j["grid"]["radii"] = {1};
  CHECK(config_error_path(j) == "/grid/radii/0");
  j = constant_ergodic(1.0);
  j["problem"]["s"] = 0.4;
  CHECK(config_error_path(j) == "/problem/s");
  j = constant_ergodic(1.0);
  j["mode"] = "sample";
  CHECK(config_error_path(j) == "/mode");
  j = constant_ergodic(1.0);
  j["grid"]["dimension"] = 3;
  CHECK(config_error_path(j) == "/grid/dimension");
  j = constant_ergodic(1.0);
  j["ergodic"] = {{"alphas", {0.5, 0.5}}};
  CHECK(config_error_path(j) == "/ergodic/alphas/1");
  j = constant_ergodic(1.0);
  j["grid"]["spacing"] = "fine";
  CHECK(config_error_path(j) == "/grid/spacing");
  CHECK(config_error_path(json::array()) == "/");
  CHECK(config_error_path(json::object()) == "/mode");
}

TEST_CASE("sections and parameters must belong to the mode and family") {
  auto j = constant_ergodic(1.0);
  j["discounted"] = {{"alpha", 0.5}};
  CHECK(config_error_path(j) == "/discounted");
  j = constant_ergodic(1.0);
  j["problem"]["gamma"] = 1.6;
  CHECK(config_error_path(j) == "/problem/gamma");
  j = constant_ergodic(1.0);
  j["study"] = {{"levels", 2}};
  CHECK(config_error_path(j) == "/study");
  j = example_certify(false);
  j["output"] = {{"stencil", true}};
  CHECK(config_error_path(j) == "/output/stencil");
}

TEST_CASE("custom expressions are checked at parse time") {
  json j = {{"mode", "discounted"},
            {"problem",
             {{"family", "custom"},
              {"controls", {{{"label", "a"}, {"kernel", "0.5"}, {"drift", {"-x", "0"}}}}}}}};
  CHECK(config_error_path(j) == "/problem/controls/0/drift");
  j["problem"]["controls"][0]["drift"] = {"-x + q"};
  CHECK(config_error_path(j) == "/problem/controls/0/drift/0");
  j["problem"]["controls"][0]["drift"] = {"-x"};
  j["problem"]["controls"][0]["cost"] = "y";
  CHECK(config_error_path(j) == "/problem/controls/0/cost");
  j["problem"]["controls"][0]["cost"] = "1 - cos(x)";
  j["problem"]["controls"][0]["kernel"] = "0.5 * (1 + 0.5 * cos(x))";
  const auto cfg = cli::parse_config(j);
  const auto p = cli::build_problem(cfg);
  REQUIRE(p.controls.size() == 1);
  CHECK_FALSE(p.controls[0].kernel_translation_invariant);
  CHECK(p.controls[0].cost_at({0.0, 0.0}) == 0.0);
  CHECK(p.controls[0].drift_at({2.0, 0.0})[0] == -2.0);
  CHECK(p.controls[0].kernel({0.0, 0.0}, {1.0, 0.0}) == 0.75);
}

TEST_CASE("shipped configs parse") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(NLHJB_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(cli::load_config(entry.path()));
    ++count;
  }
  CHECK(count >= 5);
}

TEST_CASE("constant-cost ergodic run reports lambda = kappa and a zero potential") {
  const auto dir = scratch("constant");
  const auto r = cli::run(cli::parse_config(with_output(constant_ergodic(-3.0), dir)));
  CHECK(r.exit_code == cli::kOk);
  const auto report = json::parse(slurp(dir / "report.json"));
  CHECK(std::abs(report["lambda_star"].get<double>() + 3.0) <= 1e-9);
  CHECK(report["status"] == "ok");
  std::istringstream csv(slurp(dir / "solution.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "x1,u");
  int rows = 0;
  while (std::getline(csv, line)) {
    const double u = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(std::abs(u) <= 1e-9);
    ++rows;
  }
  CHECK(rows == report["nodes"].get<int>());
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(fs::exists(dir / "metadata.json"));
}

TEST_CASE("report.json is byte-identical across repeated runs") {
  const auto dir = scratch("determinism");
  json j = with_output(constant_ergodic(1.0), dir);
  j["problem"] = {{"family", "example"}};
  j["grid"] = {{"spacing", 0.5}, {"radii", {8, 16}}};
  const auto cfg = cli::parse_config(j);
  cli::run(cfg);
  const auto first = slurp(dir / "report.json");
  const auto first_csv = slurp(dir / "solution.csv");
  cli::run(cfg);
  CHECK(slurp(dir / "report.json") == first);
  CHECK(slurp(dir / "solution.csv") == first_csv);
  CHECK(first.find("wall_seconds") == std::string::npos);
}

TEST_CASE("certify mode: example has no violations, outward drift has some") {
  const auto good = scratch("certify-good");
  CHECK(cli::run(cli::parse_config(with_output(example_certify(false), good))).exit_code == cli::kOk);
  const auto cert = json::parse(slurp(good / "certificate.json"));
  CHECK(cert["violations"] == json::array());
  CHECK(cert["admissible"] == true);
  CHECK(fs::exists(good / "lv.csv"));

  const auto bad = scratch("certify-bad");
  CHECK(cli::run(cli::parse_config(with_output(example_certify(true), bad))).exit_code == cli::kInvariantFailed);
  CHECK_FALSE(json::parse(slurp(bad / "certificate.json"))["violations"].empty());
}

TEST_CASE("command line: unknown key exits 1 with an error naming the key") {
  const auto dir = scratch("main-bad");
  auto j = constant_ergodic(1.0);
  j["grid"]["radius"] = 8;
  std::string out;
  CHECK(run_main(j, dir, out) == cli::kInvalid);
  const auto err = json::parse(out);
  CHECK(err["error"]["kind"] == "config");
  CHECK(err["error"]["path"] == "/grid/radius");
  CHECK(err["error"]["message"].get<std::string>().find("unknown key") != std::string::npos);
}

TEST_CASE("command line: output override and success") {
  const auto dir = scratch("main-ok");
  std::string out;
  CHECK(run_main(constant_ergodic(0.0), dir, out) == cli::kOk);
  CHECK(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("inadmissible problem parameters exit 1 with a problem error") {
  const auto dir = scratch("problem-error");
  json j = example_certify(false);
  j["problem"]["gamma"] = 1.9;
  const auto r = cli::run(cli::parse_config(with_output(j, dir)));
  CHECK(r.exit_code == cli::kInvalid);
  CHECK(r.report["error"]["kind"] == "problem");
  CHECK(fs::exists(dir / "report.json"));
}

TEST_CASE("non-convergence exits 2") {
  const auto dir = scratch("not-converged");
  json j = {{"mode", "discounted"},
            {"problem", {{"family", "example"}}},
            {"grid", {{"spacing", 0.25}, {"radii", {8, 16}}}},
            {"discounted", {{"domain_tol", 10.0}}},
            {"solver", {{"max_iter", 1}, {"tol", 1e-14}, {"value_iteration_fallback", false}}}};
  const auto r = cli::run(cli::parse_config(with_output(j, dir)));
  CHECK(r.exit_code == cli::kNotConverged);
  CHECK(r.report["status"] == "not-converged");
}

TEST_CASE("discounted run reports bounds and dumps requested stencil rows") {
  const auto dir = scratch("discounted");
  json j = {{"mode", "discounted"},
            {"problem", {{"family", "example"}}},
            {"grid", {{"spacing", 0.25}, {"radii", {8, 16}}}},
            {"discounted", {{"alpha", 0.5}, {"domain_tol", 0.2}}},
            {"output", {{"stencil", {32, 33}}}}};
  const auto r = cli::run(cli::parse_config(with_output(j, dir)));
  CHECK(r.exit_code == cli::kOk);
  bool saw_barrier = false;
  for (const auto& inv : r.report["invariants"]) {
    CHECK(inv["passed"] == true);
    if (inv["name"] == "barrier") saw_barrier = true;
  }
  CHECK(saw_barrier);
  const auto st = json::parse(slurp(dir / "stencil.json"));
  CHECK(st["rows"].size() == 2 * st["controls"].size());
}

TEST_CASE("convergence study: constant cost has zero deltas, zero cost zero solutions") {
  for (double kappa : {1.0, 0.0}) {
    const auto dir = scratch("study");
    json j = constant_ergodic(kappa);
    j["mode"] = "convergence-study";
    j["study"] = {{"base", "ergodic"}, {"levels", 3}};
    j["grid"] = {{"spacing", 1.0}, {"radii", {4, 8}}};
    int code = -1;
    const auto rep = cli::convergence_study(cli::parse_config(with_output(j, dir)), &code);
    CHECK(code == cli::kOk);
    REQUIRE(rep["pairs"].size() == 3);
    for (const auto& p : rep["pairs"]) {
      CHECK(p["inner_difference"].get<double>() <= 1e-9);
      CHECK(p["lambda_delta"].get<double>() <= 1e-9);
    }
    for (const auto& l : rep["levels"]) CHECK(std::abs(l["lambda_star"].get<double>() - kappa) <= 1e-9);
  }
}

TEST_CASE("study with a discounted base compares fields only") {
  const auto dir = scratch("study-discounted");
  json j = {{"mode", "convergence-study"},
            {"study", {{"base", "discounted"}, {"levels", 2}}},
            {"problem", {{"family", "constant-cost"}, {"kappa", 0.0}}},
            {"grid", {{"spacing", 0.5}, {"radii", {4, 8}}}},
            {"discounted", {{"alpha", 0.5}}}};
  const auto r = cli::run(cli::parse_config(with_output(j, dir)));
  CHECK(r.exit_code == cli::kOk);
  REQUIRE(r.report["pairs"].size() == 1);
  CHECK(r.report["pairs"][0]["inner_difference"] == 0.0);
  CHECK(r.report["pairs"][0]["lambda_delta"].is_null());
}

}  // TEST_SUITE
