#include "safegp/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "safegp/rng.hpp"

namespace safegp {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError("config: duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("config: missing required key '" + key + "'");
  consumed_.insert(key);
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& dflt) const {
  if (!has(key)) return dflt;
  return get_string(key);
}

double Config::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: " + s);
  }
}

double Config::get_double(const std::string& key, double dflt) const {
  if (!has(key)) return dflt;
  return get_double(key);
}

int Config::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-12)
    throw ConfigError("config: key '" + key + "' is not an integer");
  return i;
}

int Config::get_int(const std::string& key, int dflt) const {
  if (!has(key)) return dflt;
  return get_int(key);
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean: " + s);
}

Eigen::VectorXd Config::get_vector(const std::string& key) const {
  const std::string s = get_string(key);
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' has a bad entry: " + tok);
    }
  }
  if (vals.empty())
    throw ConfigError("config: key '" + key + "' is an empty vector");
  return Eigen::Map<Eigen::VectorXd>(vals.data(),
                                     static_cast<Eigen::Index>(vals.size()));
}

Eigen::VectorXd Config::get_vector(const std::string& key,
                                   const Eigen::VectorXd& dflt) const {
  if (!has(key)) return dflt;
  return get_vector(key);
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void Config::finish() const {
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key))
      throw ConfigError("config: unknown key '" + key + "'");
  }
}

Eigen::MatrixXd random_psd(int dim, int rank, double scale, std::uint64_t seed,
                           const std::string& stream) {
  auto rng = make_rng(seed, stream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int r = rank > 0 ? rank : dim;
  Eigen::MatrixXd C(dim, r);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < r; ++j) C(i, j) = gauss(rng);
  Eigen::MatrixXd M = scale * (C * C.transpose()) / static_cast<double>(r);
  M.diagonal().array() += 1e-3 * scale;
  return M;
}

namespace {

Eigen::MatrixXd init_cov(const std::string& descr, int dim, int rank,
                         std::uint64_t seed, const std::string& stream) {
  const auto colon = descr.find(':');
  const std::string kind = colon == std::string::npos ? descr
                                                      : descr.substr(0, colon);
  const double value =
      colon == std::string::npos ? 1.0 : std::stod(descr.substr(colon + 1));
  if (kind == "iso") return value * Eigen::MatrixXd::Identity(dim, dim);
  if (kind == "random") return random_psd(dim, rank, value, seed, stream);
  throw ConfigError("config: covariance init must be iso:<v> or random:<v>, "
                    "got " + descr);
}

}  // namespace

ScenarioConfig ScenarioConfig::parse(Config& cfg) {
  ScenarioConfig sc;
  const std::string system = cfg.get_string("system");
  if (system == "pendulum")
    sc.system = SystemKind::Pendulum;
  else if (system == "ackermann")
    sc.system = SystemKind::Ackermann;
  else
    throw ConfigError("config: system must be pendulum or ackermann");

  const int n = sc.system == SystemKind::Pendulum ? 2 : 3;
  const int m = sc.system == SystemKind::Pendulum ? 1 : 2;

  if (sc.system == SystemKind::Pendulum) {
    sc.pendulum.mass = cfg.get_double("mass", 1.0);
    sc.pendulum.length = cfg.get_double("length", 1.0);
    sc.pendulum.gravity = cfg.get_double("gravity", 10.0);
    sc.pendulum.theta_c = cfg.get_double("theta_c_deg", 45.0) * M_PI / 180.0;
    sc.pendulum.delta_col =
        cfg.get_double("delta_col_deg", 22.5) * M_PI / 180.0;
    sc.pendulum.validate();
    sc.poles = cfg.get_vector("poles", Eigen::Vector2d(-2.0, -3.0));
    if (sc.poles.size() != 2 || sc.poles.maxCoeff() >= 0.0)
      throw ConfigError("config: poles must be two strictly negative reals");
    sc.use_reference = cfg.get_bool("epsilon_greedy", true);
  } else {
    sc.ackermann.wheelbase = cfg.get_double("wheelbase", 1.0);
    sc.ackermann.q1 = cfg.get_double("q1", 0.7);
    sc.ackermann.q2 = cfg.get_double("q2", 0.3);
    sc.ackermann.w1 = cfg.get_double("w1", 0.9);
    sc.ackermann.w2 = cfg.get_double("w2", 1.5);
    sc.ackermann.gamma_h = cfg.get_double("gamma_h", 5.0);
    sc.ackermann.gamma_V = cfg.get_double("gamma_V", 10.0);
    if (cfg.has("obstacles")) {
      std::stringstream ss(cfg.get_string("obstacles"));
      std::string tok;
      while (std::getline(ss, tok, ';')) {
        std::stringstream fs(tok);
        std::string f;
        std::vector<double> vals;
        while (std::getline(fs, f, ',')) vals.push_back(std::stod(trim(f)));
        if (vals.size() != 3)
          throw ConfigError("config: each obstacle is x,y,radius");
        sc.ackermann.obstacles.push_back(
            Obstacle{Eigen::Vector2d(vals[0], vals[1]), vals[2]});
      }
    }
    sc.ackermann.validate();
    sc.prior_wheelbase = cfg.get_double("prior_wheelbase",
                                        sc.ackermann.wheelbase);
    sc.translation_invariant = cfg.get_bool("translation_invariant", true);
    const Eigen::VectorXd goal =
        cfg.get_vector("goal", Eigen::Vector2d(2.0, 0.0));
    if (goal.size() != 2) throw ConfigError("config: goal is x,y");
    sc.goal = goal;
    sc.goal_speed = cfg.get_double("goal_speed", 0.5);
  }
  sc.prior_mean_zero = cfg.get_bool("prior_mean_zero",
                                    sc.system == SystemKind::Pendulum);

  sc.signal_var = cfg.get_double("signal_var", 1.0);
  if (sc.signal_var <= 0.0) throw ConfigError("config: signal_var > 0");
  sc.lengthscales =
      cfg.get_vector("lengthscales", Eigen::VectorXd::Ones(n));
  if (sc.lengthscales.size() != n)
    throw ConfigError("config: lengthscales must have one entry per state dim");
  if (sc.lengthscales.minCoeff() <= 0.0)
    throw ConfigError("config: lengthscales must be positive");
  sc.A_init = cfg.get_string("A_init", "iso:1.0");
  sc.B_init = cfg.get_string("B_init", "iso:1.0");
  sc.B_rank = cfg.get_int("B_rank", 0);
  sc.sigma = cfg.get_double("sigma", 1e-2);
  if (sc.sigma <= 0.0) throw ConfigError("config: sigma > 0");

  sc.controller.p_safe = cfg.get_double("p_safe", 0.99);
  if (!(sc.controller.p_safe > 0.0 && sc.controller.p_safe < 1.0))
    throw ConfigError("config: p_safe in (0,1)");
  sc.controller.zeta = cfg.get_double("zeta", 0.0);
  sc.controller.zeta_b = cfg.get_double("zeta_b", 0.0);
  sc.controller.lambda = cfg.get_double("lambda", 10.0);
  if (sc.controller.lambda <= 0.0) throw ConfigError("config: lambda > 0");
  sc.controller.delta_L = cfg.get_double("delta_L", 1e-4);
  const Eigen::VectorXd rdiag =
      cfg.get_vector("R_diag", Eigen::VectorXd::Ones(m));
  if (rdiag.size() != m)
    throw ConfigError("config: R_diag must have one entry per control dim");
  sc.controller.R = rdiag.asDiagonal();
  sc.controller.u_min = cfg.get_vector(
      "u_min", Eigen::VectorXd::Constant(m, -20.0));
  sc.controller.u_max = cfg.get_vector(
      "u_max", Eigen::VectorXd::Constant(m, 20.0));
  if (sc.controller.u_min.size() != m || sc.controller.u_max.size() != m)
    throw ConfigError("config: u_min/u_max must match the control dimension");
  if ((sc.controller.u_max - sc.controller.u_min).minCoeff() <= 0.0)
    throw ConfigError("config: u_max must exceed u_min");

  sc.x0 = cfg.get_vector("x0", sc.system == SystemKind::Pendulum
                                   ? Eigen::VectorXd(Eigen::Vector2d(
                                         75.0 * M_PI / 180.0, -0.01))
                                   : Eigen::VectorXd(Eigen::Vector3d(
                                         -2.0, 0.0, 0.0)));
  if (sc.x0.size() != n) throw ConfigError("config: x0 size mismatch");
  sc.dt = cfg.get_double("dt", 0.01);
  if (sc.dt <= 0.0) throw ConfigError("config: dt > 0");
  sc.horizon = cfg.get_int("horizon", 1000);
  if (sc.horizon <= 0) throw ConfigError("config: horizon > 0");

  const std::string mode = cfg.get_string("mode", "time");
  if (mode == "time")
    sc.self_triggered = false;
  else if (mode == "self")
    sc.self_triggered = true;
  else
    throw ConfigError("config: mode must be time or self");

  sc.learning_period = cfg.get_int("learning_period", 40);
  if (sc.learning_period < 0) throw ConfigError("config: learning_period >= 0");
  sc.data_stride = cfg.get_int("data_stride", 1);
  if (sc.data_stride < 1) throw ConfigError("config: data_stride >= 1");
  sc.max_data = cfg.get_int("max_data", 0);
  sc.noise_sigma = cfg.get_double("noise_sigma", 0.0);
  sc.tau_max_factor = cfg.get_double("tau_max_factor", 10.0);

  const std::string onf = cfg.get_string("on_infeasible", "hold-zero");
  if (onf == "halt")
    sc.on_infeasible = InfeasiblePolicy::Halt;
  else if (onf == "hold-zero")
    sc.on_infeasible = InfeasiblePolicy::HoldZero;
  else if (onf == "continue")
    sc.on_infeasible = InfeasiblePolicy::Continue;
  else
    throw ConfigError("config: on_infeasible must be halt|hold-zero|continue");

  Eigen::VectorXd default_hw =
      sc.system == SystemKind::Pendulum
          ? Eigen::VectorXd(Eigen::Vector2d(0.1, 0.1))
          : Eigen::VectorXd(Eigen::Vector3d(0.1, 0.1, M_PI / 100.0));
  sc.trigger_half_widths = cfg.get_vector("trigger_half_widths", default_hw);
  if (sc.trigger_half_widths.size() != n)
    throw ConfigError("config: trigger_half_widths size mismatch");
  sc.trigger_grid = cfg.get_int("trigger_grid", 10);
  sc.trigger_samples = cfg.get_int("trigger_samples", 20);
  sc.L_alpha = cfg.get_double("L_alpha", 1.0);

  sc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));

  sc.data_csv = cfg.get_string("data_csv", "");
  sc.trajectory_csv = cfg.get_string("trajectory_csv", "");
  sc.holdout_fraction = cfg.get_double("holdout_fraction", 0.2);
  if (sc.holdout_fraction < 0.0 || sc.holdout_fraction >= 1.0)
    throw ConfigError("config: holdout_fraction in [0,1)");
  sc.repetitions = cfg.get_int("repetitions", 30);
  sc.train_size = cfg.get_int("train_size", 40);
  sc.test_size = cfg.get_int("test_size", 20);
  return sc;
}

DynamicsFn build_truth(const ScenarioConfig& sc) {
  if (sc.system == SystemKind::Pendulum) {
    const PendulumParams p = sc.pendulum;
    return [p](const Eigen::VectorXd& x) { return pendulum_f_g(p, x); };
  }
  const AckermannParams p = sc.ackermann;
  return [p](const Eigen::VectorXd& x) { return ackermann_f_g(p, x); };
}

Eigen::MatrixXd true_F(const ScenarioConfig& sc, const Eigen::VectorXd& x) {
  const auto [f, g] = build_truth(sc)(x);
  Eigen::MatrixXd F(f.size(), 1 + g.cols());
  F.col(0) = f;
  F.rightCols(g.cols()) = g;
  return F;
}

MVGPModel build_prior(const ScenarioConfig& sc, std::uint64_t seed) {
  const int n = sc.system == SystemKind::Pendulum ? 2 : 3;
  const int m = sc.system == SystemKind::Pendulum ? 1 : 2;

  Eigen::MatrixXd linv = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    linv(i, i) = 1.0 / (sc.lengthscales(i) * sc.lengthscales(i));
  RbfKernel kernel(sc.signal_var, linv);

  const Eigen::MatrixXd A = init_cov(sc.A_init, n, 0, seed, "model-init-A");
  const Eigen::MatrixXd B =
      init_cov(sc.B_init, m + 1, sc.B_rank, seed, "model-init-B");
  MatrixKernelParams params = MatrixKernelParams::from_full(B, A, sc.sigma);

  MeanFn mean;
  if (sc.prior_mean_zero) {
    mean = [n, m](const Eigen::VectorXd&) {
      return Eigen::MatrixXd::Zero(n, 1 + m);
    };
  } else if (sc.system == SystemKind::Ackermann) {
    AckermannParams prior_sys = sc.ackermann;
    prior_sys.wheelbase = sc.prior_wheelbase;
    mean = [prior_sys](const Eigen::VectorXd& x) {
      const auto [f, g] = ackermann_f_g(prior_sys, x);
      Eigen::MatrixXd F(3, 3);
      F.col(0) = f;
      F.rightCols(2) = g;
      return F;
    };
  } else {
    const PendulumParams prior_sys = sc.pendulum;
    mean = [prior_sys](const Eigen::VectorXd& x) {
      const auto [f, g] = pendulum_f_g(prior_sys, x);
      Eigen::MatrixXd F(2, 2);
      F.col(0) = f;
      F.col(1) = g;
      return F;
    };
  }

  Eigen::VectorXd mask;
  if (sc.system == SystemKind::Ackermann && sc.translation_invariant) {
    mask = Eigen::VectorXd::Zero(n);
    mask(2) = 1.0;
  }
  return mvgp_prior(std::move(mean), std::move(params), std::move(kernel), n,
                    m, std::move(mask));
}

ClosedLoopSpec build_closed_loop(const ScenarioConfig& sc, std::uint64_t seed) {
  ClosedLoopSpec spec;
  spec.truth = build_truth(sc);
  spec.prior = build_prior(sc, seed);
  spec.params = sc.controller;
  spec.x0 = sc.x0;
  spec.dt = sc.dt;
  spec.horizon = sc.horizon;
  spec.learning_period = sc.learning_period;
  spec.data_stride = sc.data_stride;
  spec.max_data = sc.max_data;
  spec.self_triggered = sc.self_triggered;
  spec.tau_max_factor = sc.tau_max_factor;
  spec.on_infeasible = sc.on_infeasible;
  spec.noise_sigma = sc.noise_sigma;
  spec.seed = seed;
  spec.trigger_half_widths = sc.trigger_half_widths;
  spec.trigger_grid = sc.trigger_grid;
  spec.trigger_samples = sc.trigger_samples;
  spec.L_alpha = sc.L_alpha;

  if (sc.system == SystemKind::Pendulum) {
    BarrierSpec b = pendulum_barrier(sc.pendulum);
    // Pole placement on the eta dynamics: s^2 + k2 s + k1 = (s-p1)(s-p2).
    b.k_alpha = Eigen::Vector2d(sc.poles(0) * sc.poles(1),
                                -(sc.poles(0) + sc.poles(1)));
    spec.policy.barriers = {std::move(b)};
    spec.policy.relative_degree = 2;
    if (sc.use_reference) {
      const Eigen::VectorXd lo = sc.controller.u_min;
      const Eigen::VectorXd hi = sc.controller.u_max;
      spec.reference_fn = [seed, lo, hi](int k) {
        return epsilon_greedy_reference(k, seed, lo, hi);
      };
    }
  } else {
    spec.policy.barriers = ackermann_barriers(sc.ackermann);
    spec.policy.lyap = ackermann_clf(sc.ackermann);
    spec.policy.relative_degree = 1;
    const Eigen::VectorXd start = sc.x0;
    const Eigen::Vector2d goal = sc.goal;
    const double speed = sc.goal_speed;
    spec.desired_fn = [start, goal, speed](double t, Eigen::VectorXd& xd,
                                           Eigen::VectorXd& xd_dot) {
      const Eigen::Vector2d delta = goal - start.head<2>();
      const double dist = delta.norm();
      const double total = dist / std::max(speed, 1e-9);
      const double frac = total <= 0.0 ? 1.0 : std::min(t / total, 1.0);
      const Eigen::Vector2d pos = start.head<2>() + frac * delta;
      const double heading = std::atan2(delta(1), delta(0));
      xd.resize(3);
      xd << pos(0), pos(1), heading;
      xd_dot.resize(3);
      if (frac < 1.0)
        xd_dot << speed * delta(0) / dist, speed * delta(1) / dist, 0.0;
      else
        xd_dot.setZero();
    };
  }
  return spec;
}

}  // namespace safegp
