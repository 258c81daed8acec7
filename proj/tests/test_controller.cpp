#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qp_oracle.hpp"
#include "safegp/controller.hpp"
#include "safegp/systems.hpp"
#include "test_support.hpp"

using namespace safegp;
using namespace safegp::test;

namespace {

// High-iteration bisection on the normal CDF, independent of the library
// implementation.
double quantile_bisection_oracle(double p) {
  double lo = -20.0, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
    (cdf < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MVGPModel deterministic_ackermann_model(const AckermannParams& ap) {
  MatrixKernelParams zero(Eigen::MatrixXd::Zero(3, 1),
                          Eigen::VectorXd::Zero(3),
                          Eigen::MatrixXd::Identity(3, 3), 0.1);
  MeanFn mean = [ap](const Eigen::VectorXd& x) {
    const auto [f, g] = ackermann_f_g(ap, x);
    Eigen::MatrixXd F(3, 3);
    F.col(0) = f;
    F.rightCols(2) = g;
    return F;
  };
  return mvgp_prior(std::move(mean), zero, RbfKernel::isotropic(1.0, 1.0, 3),
                    3, 2);
}

ControllerParams default_params(int m) {
  ControllerParams params;
  params.p_safe = 0.5;
  params.zeta = 0.0;
  params.lambda = 10.0;
  params.R = Eigen::MatrixXd::Identity(m, m);
  params.u_min = Eigen::VectorXd::Constant(m, -4.0);
  params.u_max = Eigen::VectorXd::Constant(m, 4.0);
  return params;
}

AckermannParams test_system() {
  AckermannParams ap;
  ap.obstacles.push_back(Obstacle{Eigen::Vector2d(0.5, 0.4), 0.3});
  ap.obstacles.push_back(Obstacle{Eigen::Vector2d(-0.6, -0.5), 0.4});
  return ap;
}

// Deterministic CLF-CBF QP solved by active-set enumeration over (u, delta).
Eigen::VectorXd qp_reference_control(const MVGPModel& model,
                                     const LyapunovSpec& lyap,
                                     const std::vector<BarrierSpec>& barriers,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& xd,
                                     const Eigen::VectorXd& xd_dot,
                                     const ControllerParams& params) {
  const int m = model.m;
  const int nw = m + 1;  // (u, delta)
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nw, nw);
  H.topLeftCorner(m, m) = 2.0 * params.R.transpose() * params.R;
  H(m, m) = 2.0 * params.lambda;
  const Eigen::VectorXd g = Eigen::VectorXd::Zero(nw);

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  const AffineQuadMoments clc = clc_moments(model, lyap, x, xd, xd_dot);
  Eigen::VectorXd clc_row = Eigen::VectorXd::Zero(nw);
  clc_row.head(m) = clc.e.tail(m);
  clc_row(m) = -1.0;
  rows.push_back(clc_row);
  rhs.push_back(-clc.e(0));
  for (const auto& b : barriers) {
    const AffineQuadMoments cbc = cbc1_moments(model, b, x);
    Eigen::VectorXd row = Eigen::VectorXd::Zero(nw);
    row.head(m) = -cbc.e.tail(m);
    rows.push_back(row);
    rhs.push_back(cbc.e(0) - params.zeta);
  }
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd up = Eigen::VectorXd::Zero(nw);
    up(i) = 1.0;
    rows.push_back(up);
    rhs.push_back(params.u_max(i));
    Eigen::VectorXd dn = Eigen::VectorXd::Zero(nw);
    dn(i) = -1.0;
    rows.push_back(dn);
    rhs.push_back(-params.u_min(i));
  }
  Eigen::MatrixXd G(rows.size(), nw);
  Eigen::VectorXd h(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    G.row(i) = rows[i];
    h(i) = rhs[i];
  }
  const Eigen::VectorXd w = qp_active_set_oracle(H, g, G, h);
  REQUIRE(w.size() == nw);
  return w.head(m);
}

}  // namespace

TEST_CASE("gaussian quantile coefficient") {
  CHECK(gaussian_coeff(0.5) == 0.0);
  CHECK(std::abs(gaussian_coeff(0.99) - 2.3263479) <= 1e-6);
  CHECK(std::abs(gaussian_coeff(0.99) - quantile_bisection_oracle(0.99)) <=
        1e-9);
  for (double p : {0.6, 0.75, 0.9, 0.999}) {
    CHECK(gaussian_coeff(1.0 - p) == doctest::Approx(-gaussian_coeff(p)));
    CHECK(std::abs(gaussian_coeff(p) - quantile_bisection_oracle(p)) <= 1e-9);
  }
  CHECK_THROWS(gaussian_coeff(0.0));
  CHECK_THROWS(gaussian_coeff(1.0));
}

TEST_CASE("cantelli coefficient") {
  CHECK(cantelli_coeff(0.5) == doctest::Approx(1.0));
  CHECK(cantelli_coeff(0.8) == 2.0);
  for (double p = 0.6; p < 0.995; p += 0.01)
    CHECK(cantelli_coeff(p) >= gaussian_coeff(p));
  CHECK_THROWS(cantelli_coeff(1.0));
}

TEST_CASE("socp controller reduces to the deterministic QP at p = 0.5") {
  const AckermannParams ap = test_system();
  const MVGPModel det = deterministic_ackermann_model(ap);
  const LyapunovSpec lyap = ackermann_clf(ap);
  const auto barriers = ackermann_barriers(ap);
  const ControllerParams params = default_params(2);

  auto rng = make_rng(301, "qp-equiv");
  int checked = 0;
  for (int trial = 0; trial < 30 && checked < 10; ++trial) {
    Eigen::Vector3d x(2.5 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5),
                      2.5 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5),
                      0.5 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5));
    bool safe = true;
    for (const auto& b : barriers)
      if (b.h(x) < 0.1) safe = false;
    if (!safe) continue;
    const Eigen::Vector3d xd(2.0, 0.0, 0.0);
    const Eigen::Vector3d xd_dot(0.4, 0.0, 0.0);

    const SOCProblem prob =
        build_socp_rd1(det, lyap, barriers, x, xd, xd_dot, params);
    const SOCSolution sol = solve(prob);
    REQUIRE(sol.status == SOCStatus::Optimal);
    const Eigen::VectorXd u_socp = sol.z.segment(2, 2);
    const Eigen::VectorXd u_qp =
        qp_reference_control(det, lyap, barriers, x, xd, xd_dot, params);
    CHECK((u_socp - u_qp).cwiseAbs().maxCoeff() <= 1e-6);
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("with no barriers and heavy slack weight the CLC minimizer wins") {
  const AckermannParams ap = test_system();
  const MVGPModel post = random_posterior_model(302, 3, 2, 5);
  const LyapunovSpec lyap = ackermann_clf(ap);
  ControllerParams params = default_params(2);
  params.p_safe = 0.9;
  params.lambda = 1e4;

  const Eigen::Vector3d x(0.4, -0.3, 0.1);
  const Eigen::Vector3d xd(1.5, 0.8, 0.0);
  const Eigen::Vector3d xd_dot(0.3, 0.1, 0.0);
  const SOCProblem prob = build_socp_rd1(post, lyap, {}, x, xd, xd_dot, params);
  const SOCSolution sol = solve(prob);
  REQUIRE(sol.status == SOCStatus::Optimal);

  // Dense grid over the control box; delta chosen optimally per grid point.
  const AffineQuadMoments clc = clc_moments(post, lyap, x, xd, xd_dot);
  const double cp = gaussian_coeff(params.p_safe);
  double best = std::numeric_limits<double>::infinity();
  const int G = 60;
  for (int i = 0; i <= G; ++i)
    for (int j = 0; j <= G; ++j) {
      Eigen::VectorXd u(2);
      u(0) = params.u_min(0) +
             (params.u_max(0) - params.u_min(0)) * i / static_cast<double>(G);
      u(1) = params.u_min(1) +
             (params.u_max(1) - params.u_min(1)) * j / static_cast<double>(G);
      const Eigen::VectorXd ub = ubar(u);
      const double bound = clc.mean(ub) + cp * std::sqrt(clc.var(ub));
      const double delta = std::max(0.0, bound);
      best = std::min(best, (params.R * u).squaredNorm() +
                                params.lambda * delta * delta);
    }
  const double achieved =
      (params.R * sol.z.segment(2, 2)).squaredNorm() +
      params.lambda * sol.z(1) * sol.z(1);
  CHECK(achieved <= best + 1e-3 * std::max(1.0, best));
}

TEST_CASE("tightening the probability never enlarges the feasible set") {
  const MVGPModel post = random_posterior_model(303, 3, 2, 5);
  const AckermannParams ap = test_system();
  const auto barriers = ackermann_barriers(ap);
  auto rng = make_rng(304, "tighten");
  const double c_lo = gaussian_coeff(0.5);
  const double c_hi = gaussian_coeff(0.99);
  int feasible_hits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd x = random_vector(rng, 3);
    const Eigen::VectorXd u = random_vector(rng, 2, 2.0);
    const Eigen::VectorXd ub = ubar(u);
    for (const auto& b : barriers) {
      AffineQuadMoments mom;
      try {
        mom = cbc1_moments(post, b, x);
      } catch (const EvaluationAtObstacleCenter&) {
        continue;
      }
      const double hi = mom.mean(ub) - c_hi * std::sqrt(mom.var(ub));
      const double lo = mom.mean(ub) - c_lo * std::sqrt(mom.var(ub));
      if (hi >= 0.0) {
        ++feasible_hits;
        CHECK(lo >= 0.0);
      }
    }
  }
  CHECK(feasible_hits > 0);
}

TEST_CASE("relative-degree-two program against a dense control grid") {
  const PendulumParams pp;
  ControllerParams params = default_params(1);
  params.p_safe = 0.9;
  params.u_min = Eigen::VectorXd::Constant(1, -20.0);
  params.u_max = Eigen::VectorXd::Constant(1, 20.0);
  const Eigen::VectorXd ref = Eigen::VectorXd::Constant(1, 2.0);
  const double cp = cantelli_coeff(params.p_safe);

  int feasible_checked = 0;
  for (std::uint64_t seed = 305; seed < 320; ++seed) {
    const MVGPModel post = random_posterior_model(seed, 2, 1, 6);
    BarrierSpec b = pendulum_barrier(pp);
    b.k_alpha = Eigen::Vector2d(6.0, 5.0);
    const Eigen::Vector2d x(1.45, -0.2);
    const SOCProblem prob = build_socp_rdr(post, b, x, params, ref);
    const SOCSolution sol = solve(prob);

    const AffineQuadMoments mom = cbc2_moments(post, b, x);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 4000; ++i) {
      Eigen::VectorXd u(1);
      u(0) = -20.0 + 40.0 * i / 4000.0;
      const Eigen::VectorXd ub = ubar(u);
      if (mom.mean(ub) - params.zeta - cp * std::sqrt(mom.var(ub)) < 0.0)
        continue;
      best = std::min(best, (params.R * (u - ref)).norm());
    }
    if (best == std::numeric_limits<double>::infinity()) {
      // Grid finds nothing either: status must expose the infeasibility.
      CHECK(sol.status != SOCStatus::Optimal);
      continue;
    }
    REQUIRE(sol.status == SOCStatus::Optimal);
    CHECK((params.R * (sol.z.tail(1) - ref)).norm() <= best + 1e-3);
    ++feasible_checked;
  }
  CHECK(feasible_checked >= 3);

  // Deterministic dynamics keep only the expectation constraint.
  const AckermannParams ap = test_system();
  const MVGPModel det = deterministic_ackermann_model(ap);
  BarrierSpec ob = ackermann_barriers(ap)[0];
  ControllerParams p2 = default_params(2);
  p2.zeta = 0.3;
  const Eigen::Vector3d far(2.0, 2.0, 0.0);
  const SOCProblem dprob = build_socp_rdr(det, ob, far, p2, std::nullopt);
  const SOCSolution dsol = solve(dprob);
  REQUIRE(dsol.status == SOCStatus::Optimal);
  const AffineQuadMoments dmom = cbc1_moments(det, ob, far);
  CHECK(dmom.var(ubar(dsol.z.tail(2))) <= 1e-16);
  CHECK(dmom.mean(ubar(dsol.z.tail(2))) >= p2.zeta - 1e-6);
}

TEST_CASE("policy step surfaces infeasibility and tracks references") {
  // Far from every obstacle with a zero reference the effort-optimal input
  // is near zero.
  const AckermannParams ap = test_system();
  const MVGPModel det = deterministic_ackermann_model(ap);
  PolicySpecs specs;
  specs.barriers = ackermann_barriers(ap);
  specs.lyap = ackermann_clf(ap);
  specs.relative_degree = 1;
  specs.x_desired = Eigen::Vector3d(2.0, 2.0, 0.0);
  specs.xdot_desired = Eigen::Vector3d::Zero();
  ControllerParams params = default_params(2);
  params.lambda = 1e-6;  // nearly free slack: tracking is optional
  const Eigen::Vector3d x(2.0, 2.0, 0.0);
  const PolicyStep ps = policy_step(det, specs, x, params);
  CHECK(ps.status == SOCStatus::Optimal);
  CHECK(ps.u.norm() <= 1e-2);
  CHECK(ps.scbc_values.size() == 2);
  for (double v : ps.scbc_values) CHECK(v >= -1e-6);

  // An over-tight margin inside an obstacle shadow cannot be certified.
  PolicySpecs hard = specs;
  ControllerParams tight = params;
  tight.zeta = 1e6;
  const PolicyStep bad = policy_step(det, hard, x, tight);
  CHECK(bad.status == SOCStatus::Infeasible);
}

TEST_CASE("objective scaling leaves the minimizer unchanged") {
  const AckermannParams ap = test_system();
  const MVGPModel post = random_posterior_model(306, 3, 2, 5);
  PolicySpecs specs;
  specs.barriers = ackermann_barriers(ap);
  specs.lyap = ackermann_clf(ap);
  specs.relative_degree = 1;
  specs.x_desired = Eigen::Vector3d(1.5, 0.5, 0.0);
  specs.xdot_desired = Eigen::Vector3d(0.3, 0.1, 0.0);
  ControllerParams params = default_params(2);
  params.p_safe = 0.8;

  const Eigen::Vector3d x(1.4, 1.2, 0.2);
  const PolicyStep a = policy_step(post, specs, x, params);
  ControllerParams scaled = params;
  scaled.R *= 3.0;
  scaled.lambda *= 9.0;
  const PolicyStep b = policy_step(post, specs, x, scaled);
  REQUIRE(a.status == SOCStatus::Optimal);
  REQUIRE(b.status == SOCStatus::Optimal);
  CHECK((a.u - b.u).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("controller params validation") {
  ControllerParams p = default_params(1);
  CHECK_NOTHROW(p.validate(false));
  p.p_safe = 1.0;
  CHECK_THROWS(p.validate(false));
  p.p_safe = 0.9;
  p.lambda = 0.0;
  CHECK_THROWS(p.validate(false));
}
