#include "safegp/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace safegp {

RbfKernel::RbfKernel(double sv, Eigen::MatrixXd li)
    : signal_var(sv), lengthscale_inv(std::move(li)) {
  if (signal_var <= 0.0)
    throw std::invalid_argument("RbfKernel: signal_var must be positive");
  if (lengthscale_inv.rows() != lengthscale_inv.cols())
    throw DimensionError("RbfKernel: lengthscale_inv must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(
      0.5 * (lengthscale_inv + lengthscale_inv.transpose()));
  if (llt.info() != Eigen::Success)
    throw IndefiniteMatrixError(
        "RbfKernel: lengthscale_inv is not positive definite");
}

RbfKernel RbfKernel::isotropic(double signal_var, double lengthscale,
                               int dim) {
  return RbfKernel(signal_var, Eigen::MatrixXd::Identity(dim, dim) /
                                   (lengthscale * lengthscale));
}

double RbfKernel::k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const {
  if (x.size() != x2.size() || x.size() != lengthscale_inv.rows())
    throw DimensionError("RbfKernel::k0 dimension mismatch");
  const Eigen::VectorXd d = x - x2;
  return signal_var * std::exp(-0.5 * d.dot(lengthscale_inv * d));
}

Eigen::VectorXd RbfKernel::k0_grad_x(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& x2) const {
  const Eigen::VectorXd d = x - x2;
  return -(lengthscale_inv * d) * k0(x, x2);
}

Eigen::MatrixXd RbfKernel::k0_hessian_xx2(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& x2) const {
  const Eigen::VectorXd d = x - x2;
  const Eigen::VectorXd w = lengthscale_inv * d;
  return (lengthscale_inv - w * w.transpose()) * k0(x, x2);
}

MatrixKernelParams::MatrixKernelParams(Eigen::MatrixXd Cr_, Eigen::VectorXd v_,
                                       Eigen::MatrixXd A_, double sigma_)
    : Cr(std::move(Cr_)), v(std::move(v_)), A(std::move(A_)), sigma(sigma_) {
  if (Cr.rows() != v.size())
    throw DimensionError("MatrixKernelParams: Cr/v size mismatch");
  if (v.minCoeff() < 0.0)
    throw std::invalid_argument("MatrixKernelParams: v must be nonnegative");
  if (sigma <= 0.0)
    throw std::invalid_argument("MatrixKernelParams: sigma must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (A + A.transpose()));
  if (llt.info() != Eigen::Success)
    throw IndefiniteMatrixError("MatrixKernelParams: A is not PD");
  B_ = Cr * Cr.transpose();
  B_.diagonal() += v;
}

MatrixKernelParams MatrixKernelParams::from_full(const Eigen::MatrixXd& B,
                                                 const Eigen::MatrixXd& A,
                                                 double sigma) {
  const Eigen::MatrixXd F = psd_sqrt(B);
  return MatrixKernelParams(F, Eigen::VectorXd::Zero(B.rows()), A, sigma);
}

Eigen::MatrixXd MatrixKernelParams::B0(const RbfKernel& k,
                                       const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& x2) const {
  return B_ * k.k0(x, x2);
}

}  // namespace safegp
