#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "safegp/systems.hpp"

namespace safegp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key = value text file with typed, validated accessors. Unknown keys
/// are errors (checked by finish()).
class Config {
 public:
  static Config load(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  Eigen::VectorXd get_vector(const std::string& key) const;
  Eigen::VectorXd get_vector(const std::string& key,
                             const Eigen::VectorXd& dflt) const;

  void set(const std::string& key, const std::string& value);
  /// Throws ConfigError if any key was never consumed.
  void finish() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

enum class SystemKind { Pendulum, Ackermann };

/// Everything a run needs, decoded and validated from a Config.
struct ScenarioConfig {
  SystemKind system = SystemKind::Pendulum;
  PendulumParams pendulum;
  AckermannParams ackermann;
  double prior_wheelbase = 1.0;  // prior mean dynamics (Ackermann)
  bool prior_mean_zero = true;
  bool translation_invariant = false;

  // Kernel and covariance initialization.
  double signal_var = 1.0;
  Eigen::VectorXd lengthscales;  // per state dimension
  std::string A_init = "iso:1.0";
  std::string B_init = "iso:1.0";
  int B_rank = 0;  // rank for random PSD draws; 0 = full
  double sigma = 1e-2;

  ControllerParams controller;
  Eigen::VectorXd poles;  // ECBF pole placement (relative degree 2)

  Eigen::VectorXd x0;
  double dt = 0.01;
  int horizon = 1000;
  bool self_triggered = false;
  int learning_period = 40;
  int data_stride = 1;
  int max_data = 0;
  InfeasiblePolicy on_infeasible = InfeasiblePolicy::HoldZero;
  double noise_sigma = 0.0;
  double tau_max_factor = 10.0;
  Eigen::VectorXd trigger_half_widths;
  int trigger_grid = 10;
  int trigger_samples = 20;
  double L_alpha = 1.0;
  bool use_reference = false;  // epsilon-greedy excitation reference

  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  double goal_speed = 0.5;

  std::uint64_t seed = 0;

  // fit / compare / trigger inputs
  std::string data_csv;
  std::string trajectory_csv;
  double holdout_fraction = 0.2;
  int repetitions = 30;
  int train_size = 40;
  int test_size = 20;

  static ScenarioConfig parse(Config& cfg);
};

/// Instantiate the prior model described by the scenario (seeded random
/// covariance draws use the model-init sub-stream).
MVGPModel build_prior(const ScenarioConfig& sc, std::uint64_t seed);

/// True dynamics closure for the configured system.
DynamicsFn build_truth(const ScenarioConfig& sc);

/// True F(x) = [f g] for the configured system.
Eigen::MatrixXd true_F(const ScenarioConfig& sc, const Eigen::VectorXd& x);

/// Complete closed-loop spec (policy, params, desired trajectory, ...).
ClosedLoopSpec build_closed_loop(const ScenarioConfig& sc, std::uint64_t seed);

/// Random symmetric PSD matrix C C^T / dim (+ small ridge), C ~ N(0,1).
Eigen::MatrixXd random_psd(int dim, int rank, double scale, std::uint64_t seed,
                           const std::string& stream);

}  // namespace safegp
