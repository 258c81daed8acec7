#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace safegp {

struct IndefiniteMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Mean and covariance of a Gaussian random vector.
struct GaussianVector {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
  // cov must be symmetric and PSD up to -1e-10 * max(1, max eigenvalue).
  void validate() const;
};

/// Three jointly Gaussian vectors of equal dimension with pairwise covariances.
struct JointGaussianTriple {
  GaussianVector x, y, z;
  Eigen::MatrixXd cov_xy;  // cov(x, y)
  Eigen::MatrixXd cov_yz;  // cov(y, z)
  Eigen::MatrixXd cov_zx;  // cov(z, x)

  Eigen::Index dim() const { return x.dim(); }
  Eigen::VectorXd stacked_mean() const;
  Eigen::MatrixXd stacked_cov() const;
  // stacked 3d x 3d covariance must be symmetric PSD up to 1e-8.
  void validate() const;
};

struct GaussianScalar {
  double mean = 0.0;
  double var = 0.0;
};

struct QuadFormMoments {
  double mean = 0.0;
  double var = 0.0;
};

/// Moments of x^T Lambda x for x ~ N(xbar, Sigma) and symmetric Lambda:
/// mean = xbar^T L xbar + tr(L S), var = 2 tr((L S)^2) + 4 xbar^T L S L xbar.
QuadFormMoments quad_form_moments(const Eigen::VectorXd& xbar,
                                  const Eigen::MatrixXd& Sigma,
                                  const Eigen::MatrixXd& Lambda);

/// cov(x, x^T Lambda x) = 2 Sigma Lambda xbar.
Eigen::VectorXd quad_form_cov_with_x(const Eigen::VectorXd& xbar,
                                     const Eigen::MatrixXd& Sigma,
                                     const Eigen::MatrixXd& Lambda);

struct DotProductMoments {
  double mean = 0.0;
  double var = 0.0;
  Eigen::VectorXd cov_x;  // cov(x, x^T y)
  Eigen::VectorXd cov_y;  // cov(y, x^T y)
  Eigen::VectorXd cov_z;  // cov(z, x^T y)
};

/// Moments of x^T y for the jointly Gaussian triple (x, y, z), computed by
/// delegating to quad_form_moments on the stacked [x; y; z] vector with the
/// antidiagonal selector 0.5 * [[0, I, 0], [I, 0, 0], [0, 0, 0]].
DotProductMoments gaussian_dot_moments(const JointGaussianTriple& j);

/// Symmetric PSD square root. Eigenvalues in [-1e-10 * scale, 0) are clamped
/// to zero; an eigenvalue below -1e-6 * ||M||_2 raises IndefiniteMatrixError.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M);

/// Clamp negative eigenvalues of a symmetrized matrix to zero.
Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& M, double floor = 0.0);

}  // namespace safegp
