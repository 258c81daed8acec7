#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "safegp/controller.hpp"
#include "safegp/trigger.hpp"

namespace safegp {

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 10.0;
  double theta_c = M_PI / 4.0;       // center of the unsafe cone
  double delta_col = M_PI / 8.0;     // half width of the unsafe cone

  void validate() const;
};

struct Obstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct AckermannParams {
  double wheelbase = 1.0;
  std::vector<Obstacle> obstacles;
  double q1 = 0.7;
  double q2 = 0.3;
  double w1 = 0.9;
  double w2 = 1.5;
  double gamma_h = 5.0;
  double gamma_V = 10.0;

  void validate() const;
};

using DynamicsFn =
    std::function<std::pair<Eigen::VectorXd, Eigen::MatrixXd>(const Eigen::VectorXd&)>;

std::pair<Eigen::VectorXd, Eigen::MatrixXd> pendulum_f_g(
    const PendulumParams& p, const Eigen::VectorXd& x);

std::pair<Eigen::VectorXd, Eigen::MatrixXd> ackermann_f_g(
    const AckermannParams& p, const Eigen::VectorXd& x);

/// h = cos(delta_col) - cos(theta - theta_c); relative degree two.
BarrierSpec pendulum_barrier(const PendulumParams& p);

/// h_i = q1 (||pos - o_i||^2 - r_i^2) + q2 cos(theta - phi_o); degree one.
std::vector<BarrierSpec> ackermann_barriers(const AckermannParams& p);

/// V = w1/2 rho^2 + w2 (1 - cos(alpha)).
LyapunovSpec ackermann_clf(const AckermannParams& p);

/// epsilon-greedy excitation: uniform on the box with probability 10^(-k/50),
/// zero otherwise; deterministic in (k, seed).
Eigen::VectorXd epsilon_greedy_reference(int k, std::uint64_t seed,
                                         const Eigen::VectorXd& u_min,
                                         const Eigen::VectorXd& u_max);

enum class Integrator { Euler, RK4 };

Eigen::VectorXd integrate_step(const DynamicsFn& f_g, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u, double dt,
                               Integrator method);

struct TrajectoryRecord {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double h_min = 0.0;
  double scbc_min = 0.0;
  double delta = 0.0;
  double cbc_mean = 0.0;
  double cbc_std = 0.0;
  double trace_cov = 0.0;
  // At refit steps: trace under the pre-refit model at the same state.
  double trace_cov_before = std::numeric_limits<double>::quiet_NaN();
  double tau = 0.0;
  std::string status;  // optimal | infeasible | maxiter | held
  double wall_time = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
  Eigen::VectorXd x_final;
  int infeasible_count = 0;
  std::size_t final_train_size = 0;
  Dataset observations;  // raw (x, u, finite-difference xdot) stream
};

enum class InfeasiblePolicy { Halt, HoldZero, Continue };

struct ClosedLoopSpec {
  DynamicsFn truth;
  MVGPModel prior;
  PolicySpecs policy;
  ControllerParams params;
  // Desired state and feedforward for the CLF path; called with t.
  std::function<void(double, Eigen::VectorXd&, Eigen::VectorXd&)> desired_fn;
  // Reference input for the rel-deg-r path; called with the step index.
  std::function<Eigen::VectorXd(int)> reference_fn;
  Eigen::VectorXd x0;
  double dt = 0.01;
  int horizon = 1000;
  int learning_period = 40;  // steps between posterior refits; 0 disables
  int data_stride = 1;
  int max_data = 0;  // 0 keeps everything
  bool self_triggered = false;
  double tau_max_factor = 10.0;
  InfeasiblePolicy on_infeasible = InfeasiblePolicy::HoldZero;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  Eigen::VectorXd trigger_half_widths;
  int trigger_grid = 5;
  int trigger_samples = 20;
  double L_alpha = 1.0;
};

TrajectoryLog run_closed_loop(const ClosedLoopSpec& spec);

/// Uniform thinning to at most max_points samples (keeps ends).
Dataset thin_dataset(const Dataset& ds, int stride, int max_points);

}  // namespace safegp
