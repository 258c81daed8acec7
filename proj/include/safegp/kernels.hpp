#pragma once

#include <Eigen/Dense>

#include "safegp/moments.hpp"

namespace safegp {

/// Scaled radial-basis kernel with a full matrix lengthscale:
/// k0(x, x') = signal_var * exp(-0.5 (x-x')^T lengthscale_inv (x-x')).
struct RbfKernel {
  double signal_var = 1.0;
  Eigen::MatrixXd lengthscale_inv;  // symmetric positive definite

  RbfKernel() = default;
  RbfKernel(double sv, Eigen::MatrixXd li);

  static RbfKernel isotropic(double signal_var, double lengthscale, int dim);

  double k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const;
  /// d k0 / dx = -lengthscale_inv (x - x') k0(x, x')
  Eigen::VectorXd k0_grad_x(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2) const;
  /// n x n matrix of d^2 k0 / dx_i dx'_j; equals signal_var * lengthscale_inv
  /// at x = x'.
  Eigen::MatrixXd k0_hessian_xx2(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x2) const;
};

/// Matrix kernel B0(x, x') = B k0(x, x') with row covariance B stored in
/// factored form B = Cr Cr^T + diag(v), output covariance A, and noise scale
/// sigma (S = sigma^2 A).
struct MatrixKernelParams {
  Eigen::MatrixXd Cr;   // (1+m) x r factor
  Eigen::VectorXd v;    // nonnegative diagonal, size 1+m
  Eigen::MatrixXd A;    // n x n symmetric positive definite
  double sigma = 1e-2;

  MatrixKernelParams() = default;
  MatrixKernelParams(Eigen::MatrixXd Cr_, Eigen::VectorXd v_,
                     Eigen::MatrixXd A_, double sigma_);

  /// Factor a full symmetric PSD B as V sqrt(L) with v = 0.
  static MatrixKernelParams from_full(const Eigen::MatrixXd& B,
                                      const Eigen::MatrixXd& A, double sigma);

  const Eigen::MatrixXd& B() const { return B_; }
  Eigen::MatrixXd B0(const RbfKernel& k, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& x2) const;

 private:
  Eigen::MatrixXd B_;  // cached Cr Cr^T + diag(v)
};

}  // namespace safegp
