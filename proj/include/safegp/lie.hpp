#pragma once

#include <Eigen/Dense>
#include <functional>

#include "safegp/mvgp.hpp"

namespace safegp {

struct EvaluationAtObstacleCenter : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Barrier function h with analytic derivatives. relative_degree 1 uses the
/// linear class-K gain alpha(s) = alpha_gain * s; relative_degree 2 uses the
/// ECBF gain vector k_alpha on eta(x) = [h; Lf h].
struct BarrierSpec {
  std::function<double(const Eigen::VectorXd&)> h;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_h;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess_h;
  double alpha_gain = 1.0;
  Eigen::VectorXd k_alpha;
  int relative_degree = 1;
};

/// Lyapunov function V(x, x_desired) with gradients in both arguments.
struct LyapunovSpec {
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> V;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      grad_x_V;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      grad_xd_V;
  double gamma_gain = 1.0;
};

/// Affine mean / quadratic variance of a barrier or Lyapunov condition:
/// E = e^T ubar, Var = ubar^T Vfac Vfac^T ubar.
struct AffineQuadMoments {
  Eigen::VectorXd e;     // 1+m
  Eigen::MatrixXd Vfac;  // (1+m) x q

  double mean(const Eigen::VectorXd& ub) const { return e.dot(ub); }
  double var(const Eigen::VectorXd& ub) const {
    return (Vfac.transpose() * ub).squaredNorm();
  }
};

/// Relative-degree-one control barrier condition moments.
AffineQuadMoments cbc1_moments(const MVGPModel& model, const BarrierSpec& b,
                               const Eigen::VectorXd& x);

/// Control Lyapunov condition moments, with the feedforward term
/// grad_xd V . xdot_desired folded into the constant entry.
AffineQuadMoments clc_moments(const MVGPModel& model, const LyapunovSpec& l,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& x_desired,
                              const Eigen::VectorXd& xdot_desired);

/// Scalar GP Lf h = grad_h^T f: mean at x, kernel value kappa(x, x2), and the
/// 1 x (1+m)n cross covariance with vec(F(x2)).
struct LfhMoments {
  double mean = 0.0;
  double cov_scalar = 0.0;
  Eigen::RowVectorXd cov_with_vecF;
};

LfhMoments lf_h_moments(const MVGPModel& model, const BarrierSpec& b,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& x2);

/// Vector GP grad(Lf h): mean, covariance kernel at (x, x2), cross covariance
/// with Lf h(x2) and with vec(F(x2)).
struct GradLfhMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;            // n x n
  Eigen::VectorXd cov_with_lf_h;  // n
  Eigen::MatrixXd cov_with_vecF;  // n x (1+m)n
};

GradLfhMoments grad_lf_h_moments(const MVGPModel& model, const BarrierSpec& b,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x2);

/// Relative-degree-two control barrier condition moments (requires k_alpha
/// of size 2).
AffineQuadMoments cbc2_moments(const MVGPModel& model, const BarrierSpec& b,
                               const Eigen::VectorXd& x);

/// eta(x) = [h], or [h; E[Lf h]] for relative degree two (mean substitution).
Eigen::VectorXd eta(const BarrierSpec& b, const MVGPModel& model,
                    const Eigen::VectorXd& x);

/// eta against known dynamics F(x) = [f g].
Eigen::VectorXd eta(const BarrierSpec& b,
                    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& F,
                    const Eigen::VectorXd& x);

/// Jacobian of the posterior mean column m_f(x) = M_k(x) e1 by central finite
/// differences (step 1e-6).
Eigen::MatrixXd jac_mean_f(const MVGPModel& model, const Eigen::VectorXd& x,
                           double step = 1e-6);

}  // namespace safegp
