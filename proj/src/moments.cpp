#include "safegp/moments.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace safegp {

namespace {

void check_square(const Eigen::MatrixXd& M, const char* name) {
  if (M.rows() != M.cols())
    throw DimensionError(std::string(name) + " is not square");
}

void check_symmetric(const Eigen::MatrixXd& M, const char* name,
                     double rel_tol) {
  check_square(M, name);
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > rel_tol * scale)
    throw DimensionError(std::string(name) + " is not symmetric (asymmetry " +
                         std::to_string(asym) + ")");
}

}  // namespace

void GaussianVector::validate() const {
  check_symmetric(cov, "GaussianVector::cov", 1e-10);
  if (cov.rows() != mean.size())
    throw DimensionError("GaussianVector mean/cov dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov,
                                                    Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-10 * std::max(1.0, hi))
    throw IndefiniteMatrixError("GaussianVector covariance is not PSD");
}

Eigen::VectorXd JointGaussianTriple::stacked_mean() const {
  const Eigen::Index d = dim();
  Eigen::VectorXd mu(3 * d);
  mu << x.mean, y.mean, z.mean;
  return mu;
}

Eigen::MatrixXd JointGaussianTriple::stacked_cov() const {
  const Eigen::Index d = dim();
  Eigen::MatrixXd S(3 * d, 3 * d);
  S.block(0, 0, d, d) = x.cov;
  S.block(0, d, d, d) = cov_xy;
  S.block(0, 2 * d, d, d) = cov_zx.transpose();
  S.block(d, 0, d, d) = cov_xy.transpose();
  S.block(d, d, d, d) = y.cov;
  S.block(d, 2 * d, d, d) = cov_yz;
  S.block(2 * d, 0, d, d) = cov_zx;
  S.block(2 * d, d, d, d) = cov_yz.transpose();
  S.block(2 * d, 2 * d, d, d) = z.cov;
  return S;
}

void JointGaussianTriple::validate() const {
  const Eigen::Index d = dim();
  if (y.dim() != d || z.dim() != d || cov_xy.rows() != d || cov_xy.cols() != d ||
      cov_yz.rows() != d || cov_yz.cols() != d || cov_zx.rows() != d ||
      cov_zx.cols() != d)
    throw DimensionError("JointGaussianTriple dimension mismatch");
  const Eigen::MatrixXd S = stacked_cov();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-8 * std::max(1.0, hi))
    throw IndefiniteMatrixError("stacked triple covariance is not PSD");
}

QuadFormMoments quad_form_moments(const Eigen::VectorXd& xbar,
                                  const Eigen::MatrixXd& Sigma,
                                  const Eigen::MatrixXd& Lambda) {
  const Eigen::Index d = xbar.size();
  if (Sigma.rows() != d || Sigma.cols() != d || Lambda.rows() != d ||
      Lambda.cols() != d)
    throw DimensionError("quad_form_moments dimension mismatch");
  check_symmetric(Lambda, "Lambda", 1e-12);

  const Eigen::MatrixXd LS = Lambda * Sigma;
  QuadFormMoments out;
  out.mean = xbar.dot(Lambda * xbar) + LS.trace();
  out.var = 2.0 * (LS * LS).trace() + 4.0 * xbar.dot(LS * (Lambda * xbar));
  return out;
}

Eigen::VectorXd quad_form_cov_with_x(const Eigen::VectorXd& xbar,
                                     const Eigen::MatrixXd& Sigma,
                                     const Eigen::MatrixXd& Lambda) {
  const Eigen::Index d = xbar.size();
  if (Sigma.rows() != d || Sigma.cols() != d || Lambda.rows() != d ||
      Lambda.cols() != d)
    throw DimensionError("quad_form_cov_with_x dimension mismatch");
  check_symmetric(Lambda, "Lambda", 1e-12);
  return 2.0 * Sigma * (Lambda * xbar);
}

DotProductMoments gaussian_dot_moments(const JointGaussianTriple& j) {
  const Eigen::Index n = j.dim();
  if (j.y.dim() != n || j.z.dim() != n)
    throw DimensionError("gaussian_dot_moments dimension mismatch");

  Eigen::MatrixXd Lambda = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  Lambda.block(0, n, n, n) = 0.5 * Eigen::MatrixXd::Identity(n, n);
  Lambda.block(n, 0, n, n) = 0.5 * Eigen::MatrixXd::Identity(n, n);

  const Eigen::VectorXd mu = j.stacked_mean();
  const Eigen::MatrixXd S = j.stacked_cov();

  const QuadFormMoments qf = quad_form_moments(mu, S, Lambda);
  const Eigen::VectorXd cov_all = quad_form_cov_with_x(mu, S, Lambda);

  DotProductMoments out;
  out.mean = qf.mean;
  out.var = qf.var;
  out.cov_x = cov_all.segment(0, n);
  out.cov_y = cov_all.segment(n, n);
  out.cov_z = cov_all.segment(2 * n, n);
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M) {
  check_symmetric(M, "psd_sqrt input", 1e-8);
  const Eigen::MatrixXd Ms = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ms);
  if (es.info() != Eigen::Success)
    throw IndefiniteMatrixError("psd_sqrt eigendecomposition failed");
  Eigen::VectorXd evals = es.eigenvalues();
  const double spectral = evals.cwiseAbs().maxCoeff();
  if (evals.minCoeff() < -1e-6 * spectral)
    throw IndefiniteMatrixError("psd_sqrt: matrix is indefinite (min eig " +
                                std::to_string(evals.minCoeff()) + ")");
  const Eigen::VectorXd roots =
      evals.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() *
         es.eigenvectors().transpose();
}

Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& M, double floor) {
  const Eigen::MatrixXd Ms = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ms);
  const Eigen::VectorXd evals = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace safegp
