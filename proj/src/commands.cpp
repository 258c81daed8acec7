#include "safegp/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "safegp/cogp.hpp"
#include "safegp/config.hpp"
#include "safegp/rng.hpp"

namespace safegp {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Write-temp-rename so re-running overwrites outputs atomically.
void atomic_write(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

struct LoadedScenario {
  ScenarioConfig sc;
  std::uint64_t seed;
};

LoadedScenario load_scenario(const CommandArgs& args) {
  Config cfg = Config::load(args.config_path);
  ScenarioConfig sc = ScenarioConfig::parse(cfg);
  cfg.finish();
  return {sc, args.seed.value_or(sc.seed)};
}

std::string trajectory_csv_text(const ScenarioConfig& sc,
                                const TrajectoryLog& log) {
  std::ostringstream out;
  out.precision(17);
  const int n = static_cast<int>(sc.x0.size());
  const int m = static_cast<int>(sc.controller.u_min.size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  out << ",h_min,scbc_min,delta,cbc_mean,cbc_std,trace_cov,tau,status\n";
  for (const auto& r : log.records) {
    out << r.t;
    for (int i = 0; i < n; ++i) out << "," << r.x(i);
    for (int i = 0; i < m; ++i) out << "," << r.u(i);
    out << "," << r.h_min << "," << r.scbc_min << "," << r.delta << ","
        << r.cbc_mean << "," << r.cbc_std << "," << r.trace_cov << "," << r.tau
        << "," << r.status << "\n";
  }
  return out.str();
}

double goal_error(const ScenarioConfig& sc, const TrajectoryLog& log) {
  if (log.x_final.size() == 0) return std::numeric_limits<double>::infinity();
  if (sc.system == SystemKind::Ackermann)
    return (log.x_final.head<2>() - sc.goal).norm();
  const double boundary = sc.pendulum.theta_c + sc.pendulum.delta_col;
  return std::max(0.0, boundary - log.x_final(0));
}

// Synthetic excitation data for fitting comparisons: random controls in the
// box, exact derivatives plus observation noise.
Dataset excitation_data(const ScenarioConfig& sc, int count,
                        std::uint64_t seed, const std::string& stream) {
  auto rng = make_rng(seed, stream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const DynamicsFn truth = build_truth(sc);
  const int n = static_cast<int>(sc.x0.size());
  const int m = static_cast<int>(sc.controller.u_min.size());

  Dataset ds;
  Eigen::VectorXd x = sc.x0;
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd u(m);
    for (int i = 0; i < m; ++i)
      u(i) = sc.controller.u_min(i) +
             (sc.controller.u_max(i) - sc.controller.u_min(i)) * unit(rng);
    const auto [f, g] = truth(x);
    Eigen::VectorXd xdot = f + g * u;
    for (int i = 0; i < n; ++i) xdot(i) += sc.sigma * gauss(rng);
    ds.append(x, u, xdot);
    x = integrate_step(truth, x, u, sc.dt, Integrator::RK4);
    // Keep pendulum states bounded during excitation.
    if (sc.system == SystemKind::Pendulum && std::abs(x(1)) > 20.0)
      x(1) = std::copysign(20.0, x(1));
  }
  return ds;
}

std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>> truth_test_set(
    const ScenarioConfig& sc, const std::vector<Eigen::VectorXd>& states) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>> out;
  out.reserve(states.size());
  for (const auto& x : states) out.emplace_back(x, true_F(sc, x));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double decile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

int run_guarded(const CommandArgs& args, int (*body)(const CommandArgs&)) {
  try {
    return body(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_fit_impl(const CommandArgs& args) {
  const auto [sc, seed] = load_scenario(args);
  if (sc.data_csv.empty()) throw ConfigError("fit: config needs data_csv");
  const Dataset full = Dataset::load_csv(sc.data_csv);
  if (full.empty()) throw ConfigError("fit: dataset is empty");

  // Seeded shuffle into train and held-out rows.
  std::vector<std::size_t> idx(full.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed, "fit-split");
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t held =
      static_cast<std::size_t>(sc.holdout_fraction * full.size());
  Dataset train;
  std::vector<Eigen::VectorXd> test_states;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t r = idx[i];
    if (i < held)
      test_states.push_back(full.X[r]);
    else
      train.append(full.X[r], full.U[r], full.Xdot[r]);
  }

  const auto start = std::chrono::steady_clock::now();
  const MVGPModel prior = build_prior(sc, seed);
  const MVGPModel model = condition(prior, train);
  const double fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  ordered_json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["k"] = train.size();
  if (test_states.empty())
    summary["error"] = nullptr;
  else
    summary["error"] =
        variance_weighted_error(model, truth_test_set(sc, test_states));
  summary["fit_seconds"] = fit_seconds;
  atomic_write((fs::path(args.out_dir) / "fit_summary.json").string(),
               summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_simulate_impl(const CommandArgs& args) {
  const auto [sc, seed] = load_scenario(args);
  const auto start = std::chrono::steady_clock::now();
  const ClosedLoopSpec spec = build_closed_loop(sc, seed);
  TrajectoryLog log = run_closed_loop(spec);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  double min_h = std::numeric_limits<double>::infinity();
  double min_scbc = std::numeric_limits<double>::infinity();
  for (const auto& r : log.records) {
    min_h = std::min(min_h, r.h_min);
    min_scbc = std::min(min_scbc, r.scbc_min);
  }

  atomic_write((fs::path(args.out_dir) / "trajectory.csv").string(),
               trajectory_csv_text(sc, log));
  {
    const fs::path data_path = fs::path(args.out_dir) / "dataset.csv";
    if (data_path.has_parent_path())
      fs::create_directories(data_path.parent_path());
    const fs::path tmp = data_path.string() + ".tmp";
    log.observations.save_csv(tmp.string(), sc.dt);
    fs::rename(tmp, data_path);
  }
  ordered_json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["min_h"] = min_h;
  summary["min_scbc"] = min_scbc;
  summary["goal_error"] = goal_error(sc, log);
  summary["infeasible_count"] = log.infeasible_count;
  summary["wall_time"] = wall;
  atomic_write((fs::path(args.out_dir) / "summary.json").string(),
               summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";

  const bool halted = sc.on_infeasible == InfeasiblePolicy::Halt &&
                      log.infeasible_count > 0;
  return halted ? kExitInfeasibleHalt : kExitOk;
}

struct RepResult {
  double err = 0.0;
  double seconds = 0.0;
};

RepResult fit_mvgp_rep(const ScenarioConfig& sc, const Dataset& train,
                       const std::vector<Eigen::VectorXd>& test_states,
                       std::uint64_t seed, bool diagonal) {
  ScenarioConfig local = sc;
  MVGPModel prior = build_prior(local, seed);
  if (diagonal) {
    Eigen::MatrixXd Bd = prior.params.B().diagonal().asDiagonal();
    prior.params = MatrixKernelParams::from_full(Bd, prior.params.A,
                                                 prior.params.sigma);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const MVGPModel model = condition(prior, train);
  RepResult out;
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.err = variance_weighted_error(model, truth_test_set(sc, test_states));
  return out;
}

RepResult fit_cogp_rep(const ScenarioConfig& sc, const Dataset& train,
                       const std::vector<Eigen::VectorXd>& test_states,
                       std::uint64_t seed, bool diagonal) {
  const MVGPModel ref = build_prior(sc, seed);
  Eigen::MatrixXd Sigma = kron(ref.params.B(), ref.params.A);
  if (diagonal) Sigma = Sigma.diagonal().asDiagonal();
  const Eigen::MatrixXd S =
      ref.params.sigma * ref.params.sigma * ref.params.A;
  CoGPModel prior = cogp_prior(ref.mean_fn, Sigma, ref.kernel, S, ref.n,
                               ref.m, ref.input_mask);
  const auto t0 = std::chrono::steady_clock::now();
  const CoGPModel model = cogp_condition(prior, train);
  RepResult out;
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.err = cogp_variance_weighted_error(model, truth_test_set(sc, test_states));
  return out;
}

int cmd_compare_gp_impl(const CommandArgs& args) {
  const auto [sc, seed] = load_scenario(args);
  const char* names[4] = {"mvgp", "mvgp_diag", "cogp", "cogp_diag"};
  std::vector<std::vector<double>> errs(4), times(4);

  std::vector<std::future<std::array<RepResult, 4>>> futures;
  for (int rep = 0; rep < sc.repetitions; ++rep) {
    const std::uint64_t rep_seed =
        seed + 1000ull * static_cast<std::uint64_t>(rep) + 17ull;
    futures.push_back(std::async(std::launch::async, [&sc, rep_seed]() {
      const Dataset data = excitation_data(
          sc, sc.train_size + sc.test_size, rep_seed, "compare-data");
      std::vector<std::size_t> idx(data.size());
      std::iota(idx.begin(), idx.end(), 0);
      auto rng = make_rng(rep_seed, "compare-split");
      std::shuffle(idx.begin(), idx.end(), rng);
      Dataset train;
      std::vector<Eigen::VectorXd> test_states;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i < static_cast<std::size_t>(sc.train_size))
          train.append(data.X[idx[i]], data.U[idx[i]], data.Xdot[idx[i]]);
        else
          test_states.push_back(data.X[idx[i]]);
      }
      std::array<RepResult, 4> out;
      out[0] = fit_mvgp_rep(sc, train, test_states, rep_seed, false);
      out[1] = fit_mvgp_rep(sc, train, test_states, rep_seed, true);
      out[2] = fit_cogp_rep(sc, train, test_states, rep_seed, false);
      out[3] = fit_cogp_rep(sc, train, test_states, rep_seed, true);
      return out;
    }));
  }
  for (auto& f : futures) {
    const auto rep = f.get();
    for (int i = 0; i < 4; ++i) {
      errs[i].push_back(rep[i].err);
      times[i].push_back(rep[i].seconds);
    }
  }

  ordered_json table;
  table["schema_version"] = kSchemaVersion;
  table["repetitions"] = sc.repetitions;
  table["models"] = ordered_json::array();
  for (int i = 0; i < 4; ++i) {
    ordered_json row;
    row["name"] = names[i];
    row["median_error"] = median(errs[i]);
    row["error_decile2"] = decile(errs[i], 0.2);
    row["error_decile9"] = decile(errs[i], 0.9);
    row["median_fit_seconds"] = median(times[i]);
    row["fit_seconds_decile2"] = decile(times[i], 0.2);
    row["fit_seconds_decile9"] = decile(times[i], 0.9);
    table["models"].push_back(row);
  }
  atomic_write((fs::path(args.out_dir) / "compare_gp.json").string(),
               table.dump(2) + "\n");
  std::cout << table.dump(2) << "\n";
  return kExitOk;
}

int cmd_trigger_impl(const CommandArgs& args) {
  const auto [sc, seed] = load_scenario(args);
  if (sc.trajectory_csv.empty())
    throw ConfigError("trigger: config needs trajectory_csv");
  if (!fs::exists(sc.trajectory_csv)) {
    std::cerr << "error: missing trajectory file " << sc.trajectory_csv << "\n";
    return kExitIo;
  }

  // Replay the stored states/controls and rebuild the forward differences.
  std::ifstream in(sc.trajectory_csv);
  std::string line;
  std::getline(in, line);  // header
  const int n = static_cast<int>(sc.x0.size());
  const int m = static_cast<int>(sc.controller.u_min.size());
  std::vector<Eigen::VectorXd> xs, us;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> fields;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (static_cast<int>(fields.size()) < 1 + n + m)
      throw std::runtime_error("trigger: malformed trajectory row");
    Eigen::VectorXd x(n), u(m);
    for (int i = 0; i < n; ++i) x(i) = std::stod(fields[1 + i]);
    for (int i = 0; i < m; ++i) u(i) = std::stod(fields[1 + n + i]);
    xs.push_back(x);
    us.push_back(u);
  }
  if (xs.size() < 2) throw std::runtime_error("trigger: trajectory too short");

  const MVGPModel prior = build_prior(sc, seed);
  MVGPModel model = prior;
  Dataset collected;

  std::ostringstream out;
  out.precision(17);
  out << "k,L_f_analytic,L_f_numeric,tau_analytic,tau_numeric\n";
  const auto barriers = sc.system == SystemKind::Ackermann
                            ? ackermann_barriers(sc.ackermann)
                            : std::vector<BarrierSpec>{
                                  pendulum_barrier(sc.pendulum)};
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    if (sc.learning_period > 0 && k > 0 &&
        k % static_cast<std::size_t>(sc.learning_period) == 0 &&
        !collected.empty())
      model = condition(prior,
                        thin_dataset(collected, sc.data_stride, sc.max_data));

    const Eigen::VectorXd xdot = (xs[k + 1] - xs[k]) / sc.dt;
    collected.append(xs[k], us[k], xdot);

    const RegionBox region{xs[k], sc.trigger_half_widths};
    const LipschitzReport ana =
        lipschitz_analytic(model, us[k], region, sc.controller.delta_L,
                           sc.trigger_grid);
    const LipschitzReport num = lipschitz_numeric(
        model, us[k], region, sc.trigger_grid, sc.trigger_samples,
        seed + static_cast<std::uint64_t>(k));

    double L_h = 0.0;
    for (const auto& b : barriers)
      L_h = std::max(L_h, grad_h_bound(b, region, sc.trigger_grid));
    const double xn = xdot.norm();
    const double tau_a =
        tau_rd1(ana.L_f, L_h, sc.L_alpha, sc.controller.zeta, xn);
    const double tau_n =
        tau_rd1(num.L_f, L_h, sc.L_alpha, sc.controller.zeta, xn);
    out << k << "," << ana.L_f << "," << num.L_f << "," << tau_a << ","
        << tau_n << "\n";
  }
  atomic_write((fs::path(args.out_dir) / "trigger.csv").string(), out.str());
  return kExitOk;
}

}  // namespace

int cmd_fit(const CommandArgs& args) { return run_guarded(args, cmd_fit_impl); }
int cmd_simulate(const CommandArgs& args) {
  return run_guarded(args, cmd_simulate_impl);
}
int cmd_compare_gp(const CommandArgs& args) {
  return run_guarded(args, cmd_compare_gp_impl);
}
int cmd_trigger(const CommandArgs& args) {
  return run_guarded(args, cmd_trigger_impl);
}

}  // namespace safegp
