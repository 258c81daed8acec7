#include "safegp/lie.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <Eigen/Eigenvalues>

namespace safegp {

AffineQuadMoments cbc1_moments(const MVGPModel& model, const BarrierSpec& b,
                               const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = b.grad_h(x);
  const FPrediction pred = predict_F(model, x);
  AffineQuadMoments out;
  out.e = pred.M.transpose() * g;
  out.e(0) += b.alpha_gain * b.h(x);
  const double s = std::sqrt(std::max(0.0, g.dot(pred.A * g)));
  out.Vfac = s * psd_sqrt(pred.Bxx);
  return out;
}

AffineQuadMoments clc_moments(const MVGPModel& model, const LyapunovSpec& l,
                              const Eigen::VectorXd& x,
                              const Eigen::VectorXd& x_desired,
                              const Eigen::VectorXd& xdot_desired) {
  const Eigen::VectorXd g = l.grad_x_V(x, x_desired);
  const FPrediction pred = predict_F(model, x);
  AffineQuadMoments out;
  out.e = pred.M.transpose() * g;
  out.e(0) += l.gamma_gain * l.V(x, x_desired) +
              l.grad_xd_V(x, x_desired).dot(xdot_desired);
  const double s = std::sqrt(std::max(0.0, g.dot(pred.A * g)));
  out.Vfac = s * psd_sqrt(pred.Bxx);
  return out;
}

LfhMoments lf_h_moments(const MVGPModel& model, const BarrierSpec& b,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& x2) {
  const Eigen::VectorXd g = b.grad_h(x);
  const Eigen::VectorXd g2 = b.grad_h(x2);
  const Eigen::MatrixXd& A = model.params.A;
  const Eigen::VectorXd bk = bk_first_row(model, x, x2);

  LfhMoments out;
  out.mean = g.dot(posterior_M(model, x).col(0));
  out.cov_scalar = bk(0) * g.dot(A * g2);
  // b_k(x,x2)^T (x) (grad_h(x)^T A), blocks over the columns of F.
  const Eigen::RowVectorXd gA = (A * g).transpose();
  out.cov_with_vecF.resize((model.m + 1) * model.n);
  for (int s = 0; s <= model.m; ++s)
    out.cov_with_vecF.segment(s * model.n, model.n) = bk(s) * gA;
  return out;
}

Eigen::MatrixXd jac_mean_f(const MVGPModel& model, const Eigen::VectorXd& x,
                           double step) {
  const int n = model.n;
  Eigen::MatrixXd J(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    J.col(j) = (posterior_M(model, xp).col(0) - posterior_M(model, xm).col(0)) /
               (2.0 * step);
  }
  return J;
}

GradLfhMoments grad_lf_h_moments(const MVGPModel& model, const BarrierSpec& b,
                                 const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x2) {
  const Eigen::VectorXd g = b.grad_h(x);
  const Eigen::VectorXd g2 = b.grad_h(x2);
  const Eigen::MatrixXd H = b.hess_h(x);
  const Eigen::MatrixXd H2 = b.hess_h(x2);
  const Eigen::MatrixXd& A = model.params.A;

  const Eigen::VectorXd bk = bk_first_row(model, x, x2);
  const Eigen::MatrixXd Jb = jac_x_bk_first_row(model, x, x2);  // (1+m) x n
  const Eigen::VectorXd grad_bf = Jb.row(0).transpose();
  // d b_f(x, x') / dx' equals the first-argument gradient at swapped inputs;
  // b_f is symmetric in its arguments.
  const Eigen::VectorXd grad2_bf =
      jac_x_bk_first_row(model, x2, x).row(0).transpose();

  GradLfhMoments out;
  out.mean = H * posterior_M(model, x).col(0) +
             jac_mean_f(model, x).transpose() * g;

  const Eigen::VectorXd Ag = A * g;
  const Eigen::VectorXd Ag2 = A * g2;
  const double gAg2 = g.dot(Ag2);
  out.cov = hess_xx2_bf(model, x, x2) * gAg2 +
            grad_bf * (H2 * Ag).transpose() +
            (H * Ag2) * grad2_bf.transpose() + bk(0) * H * A * H2;

  out.cov_with_lf_h = grad_bf * gAg2 + bk(0) * (H * Ag2);

  out.cov_with_vecF.resize(model.n, (model.m + 1) * model.n);
  const Eigen::MatrixXd HA = H * A;
  for (int s = 0; s <= model.m; ++s)
    out.cov_with_vecF.middleCols(s * model.n, model.n) =
        Jb.row(s).transpose() * Ag.transpose() + bk(s) * HA;
  return out;
}

AffineQuadMoments cbc2_moments(const MVGPModel& model, const BarrierSpec& b,
                               const Eigen::VectorXd& x) {
  if (b.k_alpha.size() != 2)
    throw std::invalid_argument("cbc2_moments: k_alpha must have size 2");
  const int n = model.n;
  const int p = model.m + 1;
  const Eigen::VectorXd g = b.grad_h(x);
  const Eigen::MatrixXd& A = model.params.A;
  const FPrediction pred = predict_F(model, x);
  const Eigen::MatrixXd& Mk = pred.M;
  const Eigen::MatrixXd& Bxx = pred.Bxx;
  const double k1 = b.k_alpha(0);
  const double k2 = b.k_alpha(1);

  // Step 1: Lf h moments with ubar = [1, 0..].
  const double mean_lfh = g.dot(Mk.col(0));
  const double var_lfh = std::max(0.0, Bxx(0, 0) * g.dot(A * g));

  // Steps 2-3: grad(Lf h) moments and covariances at (x, x). The covariance
  // is clamped PSD; posterior cancellation at large training sets leaves
  // small negative eigenvalues that would poison the final assembly.
  const GradLfhMoments gm = grad_lf_h_moments(model, b, x, x);
  const Eigen::VectorXd& xbar = gm.mean;
  const Eigen::MatrixXd Vx = clamp_psd(0.5 * (gm.cov + gm.cov.transpose()));

  // Per-column covariances C_s = cov(grad Lf h, F[:, s]).
  std::vector<Eigen::MatrixXd> C(p);
  for (int s = 0; s < p; ++s) C[s] = gm.cov_with_vecF.middleCols(s * n, n);

  // Step 4: moments of grad(Lf h)^T F(x) ubar as explicit affine/quadratic
  // coefficients in ubar (the per-ubar scalars follow the stacked
  // quadratic-form identities).
  Eigen::VectorXd e_F = Mk.transpose() * xbar;
  for (int s = 0; s < p; ++s) e_F(s) += C[s].trace();

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(p, p);
  for (int s = 0; s < p; ++s)
    for (int t = s; t < p; ++t) {
      const double v = (C[s] * C[t]).trace();
      Q(s, t) += v;
      Q(t, s) += (s == t) ? 0.0 : v;
    }
  Q += (Vx * A).trace() * Bxx;
  Q += Mk.transpose() * Vx * Mk;
  Q += xbar.dot(A * xbar) * Bxx;
  Eigen::MatrixXd Q5(p, p);
  for (int s = 0; s < p; ++s) {
    const Eigen::VectorXd Cx = C[s] * xbar;
    for (int t = 0; t < p; ++t) Q5(t, s) = Mk.col(t).dot(Cx);
  }
  Q += Q5 + Q5.transpose();

  // Step 5: d(x)^T ubar = k2 cov(grad(Lf h)^T F ubar, Lf h).
  const Eigen::VectorXd d =
      k2 * (g.dot(A * xbar) * Bxx.col(0) +
            Mk.transpose() * (C[0] * g));

  // Step 6: assemble.
  AffineQuadMoments out;
  out.e = e_F;
  out.e(0) += k1 * b.h(x) + k2 * mean_lfh;

  Eigen::MatrixXd Vmat = Q;
  Vmat(0, 0) += k2 * k2 * var_lfh + 2.0 * d(0);
  Vmat.row(0).tail(p - 1) += d.tail(p - 1).transpose();
  Vmat.col(0).tail(p - 1) += d.tail(p - 1);
  if (getenv("SAFEGP_DEBUG_CBC2")) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dbg(
        0.5 * (Vmat + Vmat.transpose()), Eigen::EigenvaluesOnly);
    if (dbg.eigenvalues().minCoeff() <
        -1e-6 * dbg.eigenvalues().cwiseAbs().maxCoeff()) {
      std::cerr << "CBC2 DEBUG x=" << x.transpose() << " k=" << model.train_size()
                << "\nVmat:\n" << Vmat << "\nQ:\n" << Q
                << "\nd: " << d.transpose() << " var_lfh=" << var_lfh
                << "\nBxx:\n" << Bxx << "\nVx:\n" << Vx
                << "\nxbar: " << xbar.transpose()
                << "\nC0:\n" << C[0] << "\nC1:\n" << C[1]
                << "\nMk:\n" << Mk << std::endl;
    }
  }
  out.Vfac = psd_sqrt(Vmat);
  return out;
}

Eigen::VectorXd eta(const BarrierSpec& b, const MVGPModel& model,
                    const Eigen::VectorXd& x) {
  if (b.relative_degree == 1) {
    Eigen::VectorXd out(1);
    out(0) = b.h(x);
    return out;
  }
  if (b.relative_degree == 2) {
    Eigen::VectorXd out(2);
    out(0) = b.h(x);
    out(1) = b.grad_h(x).dot(posterior_M(model, x).col(0));
    return out;
  }
  throw std::invalid_argument("eta: unsupported relative degree " +
                              std::to_string(b.relative_degree));
}

Eigen::VectorXd eta(const BarrierSpec& b,
                    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& F,
                    const Eigen::VectorXd& x) {
  if (b.relative_degree == 1) {
    Eigen::VectorXd out(1);
    out(0) = b.h(x);
    return out;
  }
  if (b.relative_degree == 2) {
    Eigen::VectorXd out(2);
    out(0) = b.h(x);
    out(1) = b.grad_h(x).dot(F(x).col(0));
    return out;
  }
  throw std::invalid_argument("eta: unsupported relative degree " +
                              std::to_string(b.relative_degree));
}

}  // namespace safegp
