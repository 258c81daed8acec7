#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "safegp/kernels.hpp"

namespace safegp {

/// [1; u]
Eigen::VectorXd ubar(const Eigen::VectorXd& u);

/// State/control/derivative triples observed from the plant.
struct Dataset {
  std::vector<Eigen::VectorXd> X;
  std::vector<Eigen::VectorXd> U;
  std::vector<Eigen::VectorXd> Xdot;

  std::size_t size() const { return X.size(); }
  bool empty() const { return X.empty(); }
  int state_dim() const { return X.empty() ? 0 : static_cast<int>(X[0].size()); }
  int control_dim() const {
    return U.empty() ? 0 : static_cast<int>(U[0].size());
  }
  void append(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
              const Eigen::VectorXd& xdot);
  void validate() const;

  /// Comma-separated text with header t, x1..xn, u1..um, xdot1..xdotn.
  static Dataset load_csv(const std::string& path);
  void save_csv(const std::string& path, double dt = 1.0) const;
};

using MeanFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// GP over vec(F(x)) with covariance B_k(x,x') (x) A. The optional input mask
/// projects the kernel input componentwise (translation-invariant dynamics
/// use mask = [0, 0, 1] so that F(x) = F([0, 0, theta])).
struct MVGPModel {
  MeanFn mean_fn;             // M0 or, after conditioning, still the prior M0
  MatrixKernelParams params;  // B factored, A, sigma
  RbfKernel kernel;
  Eigen::VectorXd input_mask;  // empty => identity
  Dataset data;                // empty for a prior model
  int n = 0;                   // state dimension
  int m = 0;                   // control dimension

  // Cached at conditioning time.
  Eigen::LLT<Eigen::MatrixXd> gram_llt;
  double applied_jitter = 0.0;  // diagonal shift folded into the gram
  Eigen::MatrixXd gram;    // U^T B U + sigma^2 I (jittered), k x k
  Eigen::MatrixXd gram_inv;
  Eigen::MatrixXd P;       // [B ubar_1, ..., B ubar_k], (1+m) x k
  Eigen::MatrixXd resid;   // Xdot - [M0(x_i) ubar_i], n x k
  Eigen::MatrixXd resid_gram_inv;  // resid * gram_inv, n x k

  std::size_t train_size() const { return data.size(); }
  /// Dimension of the only factorized system; k, never k*n.
  Eigen::Index gram_dim() const { return gram.rows(); }

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  double k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const;
  Eigen::VectorXd k0_grad_x(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2) const;
  Eigen::MatrixXd k0_hessian_xx2(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x2) const;

  /// kappa0(x, x_i) over the training set.
  Eigen::VectorXd omega(const Eigen::VectorXd& x) const;
  /// n x k matrix of gradients d kappa0(x, x_i) / dx.
  Eigen::MatrixXd grad_omega(const Eigen::VectorXd& x) const;
};

MVGPModel mvgp_prior(MeanFn mean_fn, MatrixKernelParams params,
                     RbfKernel kernel, int state_dim, int control_dim,
                     Eigen::VectorXd input_mask = Eigen::VectorXd());

/// Posterior conditioning; factorizes only the k x k gram matrix.
MVGPModel condition(const MVGPModel& prior, const Dataset& data);

struct FPrediction {
  Eigen::MatrixXd M;    // n x (1+m) posterior mean
  Eigen::MatrixXd Bxx;  // (1+m) x (1+m), symmetrized and eigenvalue-clamped
  Eigen::MatrixXd A;    // n x n output covariance
};

FPrediction predict_F(const MVGPModel& model, const Eigen::VectorXd& x);

/// Posterior of F(x) ubar(u): mean M_k(x) ubar, cov (ubar^T B_k ubar) A.
GaussianVector predict_Fu(const MVGPModel& model, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u);

/// Posterior row covariance B_k(x, x'), without symmetrization or clamping.
Eigen::MatrixXd posterior_B(const MVGPModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2);

/// Posterior mean M_k(x).
Eigen::MatrixXd posterior_M(const MVGPModel& model, const Eigen::VectorXd& x);

/// First row b_k(x, x')^T of B_k(x, x'), i.e. entries B_k[0, s]. These carry
/// cov(f(x), F(x')[:, s]) = B_k[0, s] A; note B_k(x, x') is not symmetric in
/// its matrix indices when x != x'.
Eigen::VectorXd bk_first_row(const MVGPModel& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& x2);

/// Jacobian w.r.t. x of the first row: (1+m) x n, row s = grad_x B_k[0,s].
Eigen::MatrixXd jac_x_bk_first_row(const MVGPModel& model,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& x2);

/// d^2 / dx dx' of the scalar b_f(x, x') = B_k(x, x')[0, 0]; n x n.
Eigen::MatrixXd hess_xx2_bf(const MVGPModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2);

/// ubar^T B_k(x, x') ubar and its data-dependent correction term alone.
double ub_Bk_ub(const MVGPModel& model, const Eigen::VectorXd& x,
                const Eigen::VectorXd& x2, const Eigen::VectorXd& ub);
double ub_Bk_ub_correction(const MVGPModel& model, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& x2,
                           const Eigen::VectorXd& ub);

/// sqrt(mean over test of ||K_k(x,x)^{-1/2} vec(M_k(x) - F(x))||^2).
double variance_weighted_error(
    const MVGPModel& model,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>>& test);

}  // namespace safegp
