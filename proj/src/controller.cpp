#include "safegp/controller.hpp"

#include <cmath>
#include <stdexcept>

namespace safegp {

void ControllerParams::validate(bool cantelli_path) const {
  if (!(p_safe > 0.0 && p_safe < 1.0))
    throw std::invalid_argument("ControllerParams: p_safe must be in (0,1)");
  if (zeta < 0.0 || zeta_b < 0.0)
    throw std::invalid_argument("ControllerParams: zeta must be >= 0");
  if (lambda <= 0.0)
    throw std::invalid_argument("ControllerParams: lambda must be > 0");
  if (!(delta_L > 0.0 && delta_L < 1.0))
    throw std::invalid_argument("ControllerParams: delta_L must be in (0,1)");
  (void)cantelli_path;
}

namespace {

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / M_SQRT2)); }

}  // namespace

double gaussian_coeff(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("gaussian_coeff: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -gaussian_coeff(1.0 - p);

  double lo = 0.0, hi = 1.0;
  while (normal_cdf(hi) < p) hi *= 2.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 8; ++i) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double err = normal_cdf(x) - p;
    if (std::abs(err) < 1e-16 || pdf == 0.0) break;
    x -= err / pdf;
  }
  return x;
}

double cantelli_coeff(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("cantelli_coeff: p must be in (0,1)");
  return std::sqrt(p / (1.0 - p));
}

namespace {

// ||coeff * Vfac^T ubar|| <= e^T ubar + shift as a cone over z, where the
// ubar entries map to [1 at constant, u at u_cols].
SOCone moment_cone(const AffineQuadMoments& mom, double coeff, double shift,
                   Eigen::Index num_vars, Eigen::Index u_offset, int m,
                   const Eigen::VectorXd& extra_c = Eigen::VectorXd()) {
  SOCone cone;
  const Eigen::MatrixXd Vt = mom.Vfac.transpose();  // q x (1+m)
  cone.A = Eigen::MatrixXd::Zero(Vt.rows(), num_vars);
  cone.A.middleCols(u_offset, m) = coeff * Vt.rightCols(m);
  cone.b = coeff * Vt.col(0);
  cone.c = Eigen::VectorXd::Zero(num_vars);
  cone.c.segment(u_offset, m) = mom.e.tail(m);
  cone.d = mom.e(0) + shift;
  if (extra_c.size()) cone.c += extra_c;
  return cone;
}

}  // namespace

SOCProblem build_socp_rd1(const MVGPModel& model, const LyapunovSpec& lyap,
                          const std::vector<BarrierSpec>& barriers,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& x_d,
                          const Eigen::VectorXd& xdot_d,
                          const ControllerParams& params) {
  params.validate(false);
  const int m = model.m;
  const Eigen::Index nv = 2 + m;  // (y, delta, u)
  const double c_p = gaussian_coeff(params.p_safe);

  SOCProblem prob;
  prob.objective = Eigen::VectorXd::Zero(nv);
  prob.objective(0) = 1.0;

  // Epigraph: ||[R u; sqrt(lambda) delta]|| <= y.
  SOCone epi;
  epi.A = Eigen::MatrixXd::Zero(m + 1, nv);
  epi.A.topRightCorner(m, m) = params.R;
  epi.A(m, 1) = std::sqrt(params.lambda);
  epi.b = Eigen::VectorXd::Zero(m + 1);
  epi.c = Eigen::VectorXd::Zero(nv);
  epi.c(0) = 1.0;
  epi.d = 0.0;
  prob.cones.push_back(std::move(epi));

  // Stochastic CLC: q^T ubar - delta + c(p) ||P^T ubar|| <= 0.
  {
    const AffineQuadMoments clc = clc_moments(model, lyap, x, x_d, xdot_d);
    AffineQuadMoments neg{-clc.e, clc.Vfac};
    Eigen::VectorXd delta_c = Eigen::VectorXd::Zero(nv);
    delta_c(1) = 1.0;
    prob.cones.push_back(moment_cone(neg, c_p, 0.0, nv, 2, m, delta_c));
  }

  // Stochastic CBC per barrier: e^T ubar - zeta - c(p) ||V^T ubar|| >= 0.
  for (const auto& b : barriers) {
    const AffineQuadMoments cbc = cbc1_moments(model, b, x);
    prob.cones.push_back(moment_cone(cbc, c_p, -params.zeta, nv, 2, m));
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  prob.lower = Eigen::VectorXd::Constant(nv, -inf);
  prob.upper = Eigen::VectorXd::Constant(nv, inf);
  if (params.u_min.size()) prob.lower.segment(2, m) = params.u_min;
  if (params.u_max.size()) prob.upper.segment(2, m) = params.u_max;
  return prob;
}

SOCProblem build_socp_rdr(const MVGPModel& model, const BarrierSpec& b,
                          const Eigen::VectorXd& x,
                          const ControllerParams& params,
                          const std::optional<Eigen::VectorXd>& reference_u) {
  params.validate(true);
  const int m = model.m;
  const Eigen::Index nv = 1 + m;  // (y, u)
  const double c_p = cantelli_coeff(params.p_safe);

  SOCProblem prob;
  prob.objective = Eigen::VectorXd::Zero(nv);
  prob.objective(0) = 1.0;

  SOCone epi;
  epi.A = Eigen::MatrixXd::Zero(m, nv);
  epi.A.rightCols(m) = params.R;
  epi.b = reference_u ? Eigen::VectorXd(-params.R * (*reference_u))
                      : Eigen::VectorXd(Eigen::VectorXd::Zero(m));
  epi.c = Eigen::VectorXd::Zero(nv);
  epi.c(0) = 1.0;
  epi.d = 0.0;
  prob.cones.push_back(std::move(epi));

  const AffineQuadMoments cbc = (b.relative_degree == 2)
                                    ? cbc2_moments(model, b, x)
                                    : cbc1_moments(model, b, x);
  prob.cones.push_back(moment_cone(cbc, c_p, -params.zeta, nv, 1, m));

  constexpr double inf = std::numeric_limits<double>::infinity();
  prob.lower = Eigen::VectorXd::Constant(nv, -inf);
  prob.upper = Eigen::VectorXd::Constant(nv, inf);
  if (params.u_min.size()) prob.lower.segment(1, m) = params.u_min;
  if (params.u_max.size()) prob.upper.segment(1, m) = params.u_max;
  return prob;
}

PolicyStep policy_step(const MVGPModel& model, const PolicySpecs& specs,
                       const Eigen::VectorXd& x,
                       const ControllerParams& params) {
  const int m = model.m;
  PolicyStep out;

  std::vector<AffineQuadMoments> cbcs;
  double coeff = 0.0;
  SOCProblem prob;
  Eigen::Index u_offset = 0;

  if (specs.relative_degree >= 2 || !specs.lyap) {
    if (specs.barriers.size() != 1)
      throw std::invalid_argument(
          "policy_step: the relative-degree-r path takes exactly one barrier");
    prob = build_socp_rdr(model, specs.barriers[0], x, params,
                          specs.reference_u);
    cbcs.push_back(specs.barriers[0].relative_degree == 2
                       ? cbc2_moments(model, specs.barriers[0], x)
                       : cbc1_moments(model, specs.barriers[0], x));
    coeff = cantelli_coeff(params.p_safe);
    u_offset = 1;
  } else {
    prob = build_socp_rd1(model, *specs.lyap, specs.barriers, x,
                          specs.x_desired, specs.xdot_desired, params);
    for (const auto& b : specs.barriers)
      cbcs.push_back(cbc1_moments(model, b, x));
    coeff = gaussian_coeff(params.p_safe);
    u_offset = 2;
  }

  const SOCSolution sol = solve(prob);
  out.status = sol.status;
  out.u = sol.z.segment(u_offset, m);
  if (u_offset == 2) out.delta = sol.z(1);

  const Eigen::VectorXd ub = ubar(out.u);
  double tightest = std::numeric_limits<double>::infinity();
  for (const auto& mom : cbcs) {
    const double val =
        mom.mean(ub) - params.zeta - coeff * std::sqrt(mom.var(ub));
    out.scbc_values.push_back(val);
    if (val < tightest) {
      tightest = val;
      out.cbc_mean = mom.mean(ub);
      out.cbc_std = std::sqrt(mom.var(ub));
    }
  }
  return out;
}

}  // namespace safegp
