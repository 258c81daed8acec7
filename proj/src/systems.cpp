#include "safegp/systems.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "safegp/rng.hpp"

namespace safegp {

void PendulumParams::validate() const {
  if (mass <= 0.0 || length <= 0.0 || gravity <= 0.0)
    throw std::invalid_argument("PendulumParams: mass, length, gravity > 0");
  if (!(delta_col > 0.0 && delta_col < M_PI / 2.0))
    throw std::invalid_argument("PendulumParams: delta_col in (0, pi/2)");
}

void AckermannParams::validate() const {
  if (wheelbase <= 0.0)
    throw std::invalid_argument("AckermannParams: wheelbase > 0");
  for (const auto& o : obstacles)
    if (o.radius <= 0.0)
      throw std::invalid_argument("AckermannParams: obstacle radius > 0");
  if (q1 <= 0.0 || q2 <= 0.0 || w1 <= 0.0 || w2 <= 0.0 || gamma_h <= 0.0 ||
      gamma_V <= 0.0)
    throw std::invalid_argument("AckermannParams: weights must be positive");
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> pendulum_f_g(
    const PendulumParams& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd f(2);
  f << x(1), -(p.gravity / p.length) * std::sin(x(0));
  Eigen::MatrixXd g(2, 1);
  g << 0.0, 1.0 / (p.mass * p.length);
  return {f, g};
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> ackermann_f_g(
    const AckermannParams& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd g(3, 2);
  g << std::cos(x(2)), 0.0, std::sin(x(2)), 0.0, 0.0, 1.0 / p.wheelbase;
  return {f, g};
}

BarrierSpec pendulum_barrier(const PendulumParams& p) {
  p.validate();
  BarrierSpec b;
  const double cd = std::cos(p.delta_col);
  const double tc = p.theta_c;
  b.h = [cd, tc](const Eigen::VectorXd& x) {
    return cd - std::cos(x(0) - tc);
  };
  b.grad_h = [tc](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(2);
    g << std::sin(x(0) - tc), 0.0;
    return g;
  };
  b.hess_h = [tc](const Eigen::VectorXd& x) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, 2);
    H(0, 0) = std::cos(x(0) - tc);
    return H;
  };
  b.relative_degree = 2;
  b.k_alpha = Eigen::Vector2d(1.0, 1.0);
  return b;
}

std::vector<BarrierSpec> ackermann_barriers(const AckermannParams& p) {
  p.validate();
  std::vector<BarrierSpec> out;
  for (const auto& obs : p.obstacles) {
    const Eigen::Vector2d o = obs.center;
    const double r2 = obs.radius * obs.radius;
    const double q1 = p.q1, q2 = p.q2;
    auto parts = [o](const Eigen::VectorXd& x) {
      const double u = x(0) - o(0);
      const double v = x(1) - o(1);
      const double rho2 = u * u + v * v;
      if (rho2 < 1e-18)
        throw EvaluationAtObstacleCenter(
            "barrier evaluated at an obstacle center");
      return std::tuple<double, double, double>(u, v, rho2);
    };
    BarrierSpec b;
    b.h = [parts, o, r2, q1, q2](const Eigen::VectorXd& x) {
      const auto [u, v, rho2] = parts(x);
      const double phi = std::atan2(v, u);
      return q1 * (rho2 - r2) + q2 * std::cos(x(2) - phi);
    };
    b.grad_h = [parts, q1, q2](const Eigen::VectorXd& x) {
      const auto [u, v, rho2] = parts(x);
      const double phi = std::atan2(v, u);
      const double sa = std::sin(x(2) - phi);
      Eigen::VectorXd g(3);
      // d phi / dx = -v/rho2, d phi / dy = u/rho2.
      g(0) = 2.0 * q1 * u + q2 * sa * (-v / rho2);
      g(1) = 2.0 * q1 * v + q2 * sa * (u / rho2);
      g(2) = -q2 * sa;
      return g;
    };
    b.hess_h = {};
    b.relative_degree = 1;
    b.alpha_gain = p.gamma_h;
    out.push_back(std::move(b));
  }
  return out;
}

LyapunovSpec ackermann_clf(const AckermannParams& p) {
  p.validate();
  const double w1 = p.w1, w2 = p.w2;
  auto parts = [](const Eigen::VectorXd& x, const Eigen::VectorXd& xd) {
    const double u = xd(0) - x(0);
    const double v = xd(1) - x(1);
    const double rho2 = u * u + v * v;
    return std::tuple<double, double, double>(u, v, rho2);
  };
  LyapunovSpec l;
  l.V = [parts, w1, w2](const Eigen::VectorXd& x, const Eigen::VectorXd& xd) {
    const auto [u, v, rho2] = parts(x, xd);
    if (rho2 < 1e-18) return 0.0;
    const double alpha = x(2) - std::atan2(v, u);
    return 0.5 * w1 * rho2 + w2 * (1.0 - std::cos(alpha));
  };
  l.grad_x_V = [parts, w1, w2](const Eigen::VectorXd& x,
                               const Eigen::VectorXd& xd) {
    const auto [u, v, rho2] = parts(x, xd);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
    if (rho2 < 1e-18) return g;
    const double alpha = x(2) - std::atan2(v, u);
    const double sa = std::sin(alpha);
    g(0) = -w1 * u - w2 * sa * v / rho2;
    g(1) = -w1 * v + w2 * sa * u / rho2;
    g(2) = w2 * sa;
    return g;
  };
  l.grad_xd_V = [parts, w1, w2](const Eigen::VectorXd& x,
                                const Eigen::VectorXd& xd) {
    const auto [u, v, rho2] = parts(x, xd);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
    if (rho2 < 1e-18) return g;
    const double alpha = x(2) - std::atan2(v, u);
    const double sa = std::sin(alpha);
    g(0) = w1 * u + w2 * sa * v / rho2;
    g(1) = w1 * v - w2 * sa * u / rho2;
    g(2) = 0.0;
    return g;
  };
  l.gamma_gain = p.gamma_V;
  return l;
}

Eigen::VectorXd epsilon_greedy_reference(int k, std::uint64_t seed,
                                         const Eigen::VectorXd& u_min,
                                         const Eigen::VectorXd& u_max) {
  const double eps = std::pow(10.0, -static_cast<double>(k) / 50.0);
  auto rng = make_rng(seed, "reference-policy", static_cast<std::uint64_t>(k));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(u_min.size());
  if (unit(rng) < eps) {
    for (Eigen::Index i = 0; i < u.size(); ++i)
      u(i) = u_min(i) + (u_max(i) - u_min(i)) * unit(rng);
  }
  return u;
}

Eigen::VectorXd integrate_step(const DynamicsFn& f_g, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u, double dt,
                               Integrator method) {
  auto xdot = [&](const Eigen::VectorXd& s) {
    const auto [f, g] = f_g(s);
    return Eigen::VectorXd(f + g * u);
  };
  if (method == Integrator::Euler) return x + dt * xdot(x);
  const Eigen::VectorXd k1 = xdot(x);
  const Eigen::VectorXd k2 = xdot(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = xdot(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = xdot(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Dataset thin_dataset(const Dataset& ds, int stride, int max_points) {
  Dataset out;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); i += std::max(stride, 1))
    keep.push_back(i);
  if (max_points > 0 && keep.size() > static_cast<std::size_t>(max_points)) {
    std::vector<std::size_t> sub;
    const double step =
        static_cast<double>(keep.size() - 1) / (max_points - 1);
    for (int i = 0; i < max_points; ++i)
      sub.push_back(keep[static_cast<std::size_t>(std::lround(i * step))]);
    sub.erase(std::unique(sub.begin(), sub.end()), sub.end());
    keep = std::move(sub);
  }
  for (const auto i : keep) out.append(ds.X[i], ds.U[i], ds.Xdot[i]);
  return out;
}

namespace {

double min_h(const std::vector<BarrierSpec>& barriers,
             const Eigen::VectorXd& x) {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& b : barriers) v = std::min(v, b.h(x));
  return v;
}

double compute_tau(const ClosedLoopSpec& spec, const MVGPModel& model,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                   const Eigen::VectorXd& xdot, int k) {
  RegionBox region{x, spec.trigger_half_widths};
  const LipschitzReport rep =
      lipschitz_numeric(model, u, region, spec.trigger_grid,
                        spec.trigger_samples,
                        spec.seed + static_cast<std::uint64_t>(k));
  double tau = std::numeric_limits<double>::infinity();
  for (const auto& b : spec.policy.barriers) {
    const double Lh = grad_h_bound(b, region, spec.trigger_grid);
    const double t =
        b.relative_degree == 1
            ? tau_rd1(rep.L_f, Lh, spec.L_alpha, spec.params.zeta,
                      xdot.norm())
            : tau_rdr(rep.L_f, Lh, spec.params.zeta_b, xdot.norm());
    tau = std::min(tau, t);
  }
  return tau;
}

}  // namespace

TrajectoryLog run_closed_loop(const ClosedLoopSpec& spec) {
  TrajectoryLog log;
  Eigen::VectorXd x = spec.x0;
  const int m = spec.prior.m;
  MVGPModel model = spec.prior;
  Dataset collected;
  auto noise_rng = make_rng(spec.seed, "noise");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::MatrixXd noise_sqrt =
      spec.noise_sigma > 0.0
          ? Eigen::MatrixXd(spec.noise_sigma * psd_sqrt(spec.prior.params.A))
          : Eigen::MatrixXd();

  PolicySpecs policy = spec.policy;
  Eigen::VectorXd u_held = Eigen::VectorXd::Zero(m);
  int hold_remaining = 0;
  double held_tau = 0.0;
  const double tau_max = spec.tau_max_factor * spec.dt;

  for (int k = 0; k < spec.horizon; ++k) {
    const double t = k * spec.dt;
    TrajectoryRecord rec;
    rec.t = t;
    rec.x = x;
    if (spec.learning_period > 0 && k > 0 && k % spec.learning_period == 0 &&
        !collected.empty()) {
      const FPrediction before = predict_F(model, x);
      rec.trace_cov_before = before.Bxx.trace() * before.A.trace();
      model = condition(
          spec.prior, thin_dataset(collected, spec.data_stride, spec.max_data));
    }

    if (spec.desired_fn) {
      policy.x_desired.resize(x.size());
      policy.xdot_desired.resize(x.size());
      spec.desired_fn(t, policy.x_desired, policy.xdot_desired);
    }
    if (spec.reference_fn) policy.reference_u = spec.reference_fn(k);

    Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
    const auto start = std::chrono::steady_clock::now();
    if (hold_remaining > 0) {
      u = u_held;
      --hold_remaining;
      rec.status = "held";
      rec.tau = held_tau;
      const Eigen::VectorXd ub = ubar(u);
      double scbc = std::numeric_limits<double>::infinity();
      const double coeff = policy.relative_degree >= 2 || !policy.lyap
                               ? cantelli_coeff(spec.params.p_safe)
                               : gaussian_coeff(spec.params.p_safe);
      for (const auto& b : policy.barriers) {
        const AffineQuadMoments mom = b.relative_degree == 2
                                          ? cbc2_moments(model, b, x)
                                          : cbc1_moments(model, b, x);
        const double val = mom.mean(ub) - spec.params.zeta -
                           coeff * std::sqrt(mom.var(ub));
        if (val < scbc) {
          scbc = val;
          rec.cbc_mean = mom.mean(ub);
          rec.cbc_std = std::sqrt(mom.var(ub));
        }
      }
      rec.scbc_min = scbc;
    } else {
      PolicyStep ps = policy_step(model, policy, x, spec.params);
      if (ps.status == SOCStatus::Optimal) {
        u = ps.u;
        rec.status = "optimal";
      } else {
        rec.status =
            ps.status == SOCStatus::Infeasible ? "infeasible" : "maxiter";
        ++log.infeasible_count;
        switch (spec.on_infeasible) {
          case InfeasiblePolicy::Halt:
            rec.u = u;
            rec.h_min = min_h(policy.barriers, x);
            log.records.push_back(std::move(rec));
            log.x_final = x;
            log.final_train_size = model.train_size();
            log.observations = std::move(collected);
            return log;
          case InfeasiblePolicy::HoldZero:
            u.setZero();
            break;
          case InfeasiblePolicy::Continue:
            u = u_held;
            break;
        }
      }
      if (ps.delta) rec.delta = *ps.delta;
      rec.scbc_min = ps.scbc_values.empty()
                         ? 0.0
                         : *std::min_element(ps.scbc_values.begin(),
                                             ps.scbc_values.end());
      rec.cbc_mean = ps.cbc_mean;
      rec.cbc_std = ps.cbc_std;

      if (spec.self_triggered && rec.status == "optimal") {
        const auto [f, g] = spec.truth(x);
        const Eigen::VectorXd xdot_now = f + g * u;
        double tau = compute_tau(spec, model, x, u, xdot_now, k);
        tau = std::min(std::max(tau, spec.dt), tau_max);
        rec.tau = tau;
        held_tau = tau;
        hold_remaining =
            static_cast<int>(std::lround(std::ceil(tau / spec.dt))) - 1;
        u_held = u;
      } else {
        u_held = u;
      }
    }
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    rec.u = u;
    rec.h_min = min_h(policy.barriers, x);
    const FPrediction pred = predict_F(model, x);
    rec.trace_cov = pred.Bxx.trace() * pred.A.trace();

    const Eigen::VectorXd x_next =
        integrate_step(spec.truth, x, u, spec.dt, Integrator::RK4);
    Eigen::VectorXd xdot_obs = (x_next - x) / spec.dt;
    if (noise_sqrt.size()) {
      Eigen::VectorXd w(x.size());
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = gauss(noise_rng);
      xdot_obs += noise_sqrt * w;
    }
    collected.append(x, u, xdot_obs);

    log.records.push_back(std::move(rec));
    x = x_next;
  }
  log.x_final = x;
  log.final_train_size = model.train_size();
  log.observations = std::move(collected);
  return log;
}

}  // namespace safegp
