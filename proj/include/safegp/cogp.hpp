#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "safegp/mvgp.hpp"

namespace safegp {

/// Coregionalization GP over vec(F(x)) with kernel Sigma * kappa0(x, x').
/// Conditioning factorizes the full kn x kn gram; kept for the accuracy and
/// speed comparison against the Kronecker-factored model.
struct CoGPModel {
  MeanFn mean_fn;
  Eigen::MatrixXd Sigma;  // (1+m)n x (1+m)n symmetric PSD
  RbfKernel kernel;
  Eigen::VectorXd input_mask;  // empty => identity
  Eigen::MatrixXd S;           // n x n noise covariance
  Dataset data;
  int n = 0;
  int m = 0;

  Eigen::LLT<Eigen::MatrixXd> gram_llt;
  double applied_jitter = 0.0;
  Eigen::MatrixXd gram;        // kn x kn
  Eigen::VectorXd resid;       // vec(Xdot - M U), kn
  Eigen::VectorXd gram_solve_resid;

  std::size_t train_size() const { return data.size(); }
  Eigen::Index gram_dim() const { return gram.rows(); }
  double k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const;

  /// Sigma (ubar (x) I_n) contraction used by the gram assembly.
  Eigen::MatrixXd sigma_contract(const Eigen::VectorXd& ub) const;
};

CoGPModel cogp_prior(MeanFn mean_fn, Eigen::MatrixXd Sigma, RbfKernel kernel,
                     Eigen::MatrixXd S, int state_dim, int control_dim,
                     Eigen::VectorXd input_mask = Eigen::VectorXd());

CoGPModel cogp_condition(const CoGPModel& prior, const Dataset& data);

/// Posterior over vec(F(x)); cov symmetrized and clamped PSD.
GaussianVector cogp_predict(const CoGPModel& model, const Eigen::VectorXd& x);

double cogp_variance_weighted_error(
    const CoGPModel& model,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>>& test);

/// Kronecker product helper (column-major vec convention).
Eigen::MatrixXd kron(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q);

}  // namespace safegp
