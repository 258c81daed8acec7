#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace safegp {

/// One second-order cone constraint ||A z + b||_2 <= c^T z + d.
struct SOCone {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double d = 0.0;
};

/// min obj^T z subject to cones and an optional per-coordinate box.
struct SOCProblem {
  Eigen::VectorXd objective;
  std::vector<SOCone> cones;
  Eigen::VectorXd lower;  // empty or per-coordinate (-inf allowed)
  Eigen::VectorXd upper;  // empty or per-coordinate (+inf allowed)

  Eigen::Index num_vars() const { return objective.size(); }
  void validate() const;
  /// Structured text dump for external cross-checking.
  std::string dump() const;
};

enum class SOCStatus { Optimal, Infeasible, MaxIter };

struct SOCSolution {
  Eigen::VectorXd z;
  SOCStatus status = SOCStatus::MaxIter;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Barrier interior-point solve: phase-I slack minimization, then a smoothed
/// cone barrier -log((c^T z + d)^2 - ||A z + b||^2) with damped Newton steps,
/// barrier parameter x10 per outer step, stop at duality measure <= 1e-8 or
/// 200 Newton steps.
SOCSolution solve(const SOCProblem& p);

/// Stationarity plus complementarity residual of the barrier KKT system at
/// z, relative to the constraint data magnitude.
double kkt_residual(const SOCProblem& p, const Eigen::VectorXd& z);

/// Worst cone/bound violation at z (negative slack magnitude); <= 0 when
/// feasible.
double max_violation(const SOCProblem& p, const Eigen::VectorXd& z);

}  // namespace safegp
