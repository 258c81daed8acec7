#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "safegp/lie.hpp"
#include "safegp/socp.hpp"

namespace safegp {

struct ControllerParams {
  double p_safe = 0.99;   // probability level applied to each cone
  double zeta = 0.0;      // safety margin on the barrier condition
  double zeta_b = 0.0;    // margin used by the self-triggering CBF shift
  double lambda = 1.0;    // slack weight
  Eigen::MatrixXd R;      // m x m effort weight
  Eigen::VectorXd u_min;  // control box
  Eigen::VectorXd u_max;
  double delta_L = 1e-4;  // Lipschitz failure probability

  void validate(bool cantelli_path) const;
};

/// Standard normal quantile c(p) = sqrt(2) erfinv(2p - 1), found by bisection
/// plus Newton refinement on the normal CDF to 1e-10.
double gaussian_coeff(double p);

/// Distribution-free tightening sqrt(p / (1 - p)).
double cantelli_coeff(double p);

/// Relative-degree-one chance-constrained program of the CLF-CBF type:
/// decision z = (y, delta, u), epigraph cone over [R u; sqrt(lambda) delta],
/// one cone per Lyapunov/barrier condition.
SOCProblem build_socp_rd1(const MVGPModel& model, const LyapunovSpec& lyap,
                          const std::vector<BarrierSpec>& barriers,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& x_d,
                          const Eigen::VectorXd& xdot_d,
                          const ControllerParams& params);

/// Higher relative-degree program with the Cantelli coefficient: decision
/// z = (y, u), objective ||R (u - reference)||.
SOCProblem build_socp_rdr(const MVGPModel& model, const BarrierSpec& b,
                          const Eigen::VectorXd& x,
                          const ControllerParams& params,
                          const std::optional<Eigen::VectorXd>& reference_u =
                              std::nullopt);

/// Everything the closed-loop runner needs from one policy evaluation.
struct PolicyStep {
  Eigen::VectorXd u;
  std::optional<double> delta;
  SOCStatus status = SOCStatus::MaxIter;
  std::vector<double> scbc_values;  // achieved SCBC left-hand sides
  double cbc_mean = 0.0;            // moments of the tightest condition
  double cbc_std = 0.0;
};

struct PolicySpecs {
  std::optional<LyapunovSpec> lyap;
  std::vector<BarrierSpec> barriers;
  int relative_degree = 1;
  std::optional<Eigen::VectorXd> reference_u;  // rel-deg-r objective center
  Eigen::VectorXd x_desired;                   // rel-deg-1 CLF target
  Eigen::VectorXd xdot_desired;
};

PolicyStep policy_step(const MVGPModel& model, const PolicySpecs& specs,
                       const Eigen::VectorXd& x, const ControllerParams& params);

}  // namespace safegp
