#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "safegp/commands.hpp"
#include "safegp/config.hpp"

using namespace safegp;
namespace fs = std::filesystem;

namespace {

const char* kTinyPendulum = R"cfg(
system = pendulum
horizon = 5
dt = 0.01
seed = 3
p_safe = 0.9
learning_period = 2
A_init = random:0.05
B_init = random:1.0
signal_var = 25.0
lengthscales = 1.0, 0.5
sigma = 0.05
)cfg";

std::string write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "safegp_cli_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << text;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parser") {
  Config cfg = Config::from_string("a = 1\n# comment\nb = hello\nv = 1,2,3\n");
  CHECK(cfg.get_int("a") == 1);
  CHECK(cfg.get_string("b") == "hello");
  CHECK(cfg.get_vector("v").size() == 3);
  CHECK_NOTHROW(cfg.finish());

  Config unknown = Config::from_string("mystery = 1\n");
  CHECK_THROWS_AS(unknown.finish(), ConfigError);

  CHECK_THROWS_AS(Config::from_string("novalue\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("a = 1\na = 2\n"), ConfigError);

  Config bad = Config::from_string("x = notanumber\n");
  CHECK_THROWS_AS(bad.get_double("x"), ConfigError);
  CHECK_THROWS_AS(bad.get_string("missing"), ConfigError);
}

TEST_CASE("scenario validation catches range errors") {
  {
    Config cfg = Config::from_string("system = pendulum\np_safe = 1.5\n");
    CHECK_THROWS_AS(ScenarioConfig::parse(cfg), ConfigError);
  }
  {
    Config cfg = Config::from_string("system = rocket\n");
    CHECK_THROWS_AS(ScenarioConfig::parse(cfg), ConfigError);
  }
  {
    Config cfg = Config::from_string("system = pendulum\ndt = -0.01\n");
    CHECK_THROWS_AS(ScenarioConfig::parse(cfg), ConfigError);
  }
  {
    Config cfg =
        Config::from_string("system = pendulum\nlengthscales = 1,1,1\n");
    CHECK_THROWS_AS(ScenarioConfig::parse(cfg), ConfigError);
  }
  {
    Config cfg = Config::from_string(kTinyPendulum);
    ScenarioConfig sc = ScenarioConfig::parse(cfg);
    CHECK_NOTHROW(cfg.finish());
    CHECK(sc.horizon == 5);
    CHECK(sc.system == SystemKind::Pendulum);
  }
}

TEST_CASE("simulate writes pinned schemas atomically") {
  const std::string cfg_path = write_temp("tiny.cfg", kTinyPendulum);
  const fs::path out_dir = fs::temp_directory_path() / "safegp_cli_test/out";
  CommandArgs args;
  args.config_path = cfg_path;
  args.out_dir = out_dir.string();
  REQUIRE(cmd_simulate(args) == kExitOk);

  const std::string csv = slurp((out_dir / "trajectory.csv").string());
  std::stringstream ss(csv);
  std::string header;
  std::getline(ss, header);
  CHECK(header ==
        "t,x1,x2,u1,h_min,scbc_min,delta,cbc_mean,cbc_std,trace_cov,tau,"
        "status");
  int rows = 0;
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);

  const auto summary =
      nlohmann::json::parse(slurp((out_dir / "summary.json").string()));
  CHECK(summary["schema_version"] == kSchemaVersion);
  for (const char* key : {"min_h", "min_scbc", "goal_error",
                          "infeasible_count", "wall_time"})
    CHECK(summary.contains(key));

  // Re-running overwrites the outputs in place (write-temp-rename).
  REQUIRE(cmd_simulate(args) == kExitOk);
  CHECK(!fs::exists(out_dir / "trajectory.csv.tmp"));

  // Determinism: identical config and seed give identical trajectories.
  const std::string first = slurp((out_dir / "trajectory.csv").string());
  REQUIRE(cmd_simulate(args) == kExitOk);
  CHECK(first == slurp((out_dir / "trajectory.csv").string()));
}

TEST_CASE("fit conditions on a dataset csv and reports the holdout error") {
  // Build a small dataset from the true pendulum with mild noise.
  std::ostringstream data;
  data << "t,x1,x2,u1,xdot1,xdot2\n";
  PendulumParams pp;
  Eigen::Vector2d x(1.2, 0.0);
  for (int k = 0; k < 60; ++k) {
    const double u = 3.0 * std::sin(0.37 * k);
    const auto [f, g] = pendulum_f_g(pp, x);
    const Eigen::Vector2d xdot = f + g * Eigen::VectorXd::Constant(1, u);
    data << 0.01 * k << "," << x(0) << "," << x(1) << "," << u << ","
         << xdot(0) << "," << xdot(1) << "\n";
    x = integrate_step(
        [pp](const Eigen::VectorXd& s) { return pendulum_f_g(pp, s); }, x,
        Eigen::VectorXd::Constant(1, u), 0.01, Integrator::RK4);
  }
  const std::string data_path = write_temp("fit_data.csv", data.str());
  const std::string cfg_path = write_temp(
      "fit.cfg", std::string(kTinyPendulum) + "data_csv = " + data_path +
                     "\nholdout_fraction = 0.25\n");
  const fs::path out_dir = fs::temp_directory_path() / "safegp_cli_test/fit";
  CommandArgs args;
  args.config_path = cfg_path;
  args.out_dir = out_dir.string();
  REQUIRE(cmd_fit(args) == kExitOk);
  const auto summary =
      nlohmann::json::parse(slurp((out_dir / "fit_summary.json").string()));
  CHECK(summary["schema_version"] == kSchemaVersion);
  CHECK(summary["k"] == 45);
  CHECK(summary["error"].is_number());

  // Reproducible across runs with the same seed.
  const auto again = [&] {
    REQUIRE(cmd_fit(args) == kExitOk);
    return nlohmann::json::parse(slurp((out_dir / "fit_summary.json").string()));
  }();
  CHECK(again["error"] == summary["error"]);

  // Empty holdout reports a null error field.
  const std::string cfg0 = write_temp(
      "fit0.cfg", std::string(kTinyPendulum) + "data_csv = " + data_path +
                      "\nholdout_fraction = 0.0\n");
  args.config_path = cfg0;
  REQUIRE(cmd_fit(args) == kExitOk);
  const auto s0 =
      nlohmann::json::parse(slurp((out_dir / "fit_summary.json").string()));
  CHECK(s0["error"].is_null());
}

TEST_CASE("command error codes") {
  CommandArgs args;
  args.config_path = "/nonexistent/path.cfg";
  CHECK(cmd_simulate(args) == kExitConfig);

  const std::string bad_cfg = write_temp("bad.cfg", "system = pendulum\n"
                                                    "unknown_key = 1\n");
  args.config_path = bad_cfg;
  CHECK(cmd_simulate(args) == kExitConfig);

  // trigger without a trajectory file is an I/O error.
  const std::string trig_cfg = write_temp(
      "trig.cfg",
      std::string(kTinyPendulum) + "trajectory_csv = /nonexistent/t.csv\n");
  args.config_path = trig_cfg;
  CHECK(cmd_trigger(args) == kExitIo);

  // fit without data_csv is a config error.
  const std::string fitless = write_temp("fitless.cfg", kTinyPendulum);
  args.config_path = fitless;
  CHECK(cmd_fit(args) == kExitConfig);
}
