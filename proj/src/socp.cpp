#include "safegp/socp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace safegp {

namespace {

// The barrier internals run in extended precision: at duality measure 1e-8
// the cone slack is ~1e-9 against O(1) data, and double-precision rounding
// of the slack gradient sits above the requested KKT tolerance.
using Real = long double;
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Real kRInf = std::numeric_limits<Real>::infinity();
constexpr double kGapTol = 1e-8;
constexpr int kMaxNewton = 200;
constexpr Real kArmijo = 1e-4;

struct ConeR {
  MatX A;
  VecX b;
  VecX c;
  Real d = 0.0;
};

struct ProblemR {
  VecX objective;
  std::vector<ConeR> cones;
  VecX lower;
  VecX upper;

  Eigen::Index num_vars() const { return objective.size(); }
};

ProblemR to_real(const SOCProblem& p) {
  ProblemR out;
  out.objective = p.objective.cast<Real>();
  out.lower = p.lower.size() ? VecX(p.lower.cast<Real>())
                             : VecX(VecX::Constant(p.num_vars(), -kRInf));
  out.upper = p.upper.size() ? VecX(p.upper.cast<Real>())
                             : VecX(VecX::Constant(p.num_vars(), kRInf));
  for (const auto& cone : p.cones) {
    ConeR c;
    c.A = cone.A.cast<Real>();
    c.b = cone.b.cast<Real>();
    c.c = cone.c.cast<Real>();
    c.d = cone.d;
    out.cones.push_back(std::move(c));
  }
  return out;
}

Real barrier_complexity(const ProblemR& p) {
  Real nu = 2.0 * static_cast<Real>(p.cones.size());
  for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
    if (p.lower(j) > -kRInf) nu += 1.0;
    if (p.upper(j) < kRInf) nu += 1.0;
  }
  return std::max<Real>(nu, 1.0);
}

Real final_barrier_t(Real nu) {
  Real t = 1.0;
  while (nu / t > kGapTol) t *= 10.0;
  return t;
}

struct BarrierEval {
  bool feasible = false;
  Real value = 0.0;
  VecX grad;
  MatX hess;
};

BarrierEval eval_barrier(const ProblemR& p, const VecX& z, bool with_derivs) {
  const Eigen::Index nv = z.size();
  BarrierEval out;
  if (with_derivs) {
    out.grad = VecX::Zero(nv);
    out.hess = MatX::Zero(nv, nv);
  }
  for (const auto& cone : p.cones) {
    const Real r = cone.c.dot(z) + cone.d;
    const VecX u = cone.A * z + cone.b;
    const Real sigma = r * r - u.squaredNorm();
    if (r <= 0.0 || sigma <= 0.0) return out;
    out.value -= std::log(static_cast<double>(sigma));
    if (with_derivs) {
      const VecX gsig = 2.0 * r * cone.c - 2.0 * cone.A.transpose() * u;
      out.grad -= gsig / sigma;
      out.hess += gsig * gsig.transpose() / (sigma * sigma);
      out.hess -= (2.0 * cone.c * cone.c.transpose() -
                   2.0 * cone.A.transpose() * cone.A) /
                  sigma;
    }
  }
  for (Eigen::Index j = 0; j < nv; ++j) {
    if (p.lower(j) > -kRInf) {
      const Real s = z(j) - p.lower(j);
      if (s <= 0.0) return out;
      out.value -= std::log(static_cast<double>(s));
      if (with_derivs) {
        out.grad(j) -= 1.0 / s;
        out.hess(j, j) += 1.0 / (s * s);
      }
    }
    if (p.upper(j) < kRInf) {
      const Real s = p.upper(j) - z(j);
      if (s <= 0.0) return out;
      out.value -= std::log(static_cast<double>(s));
      if (with_derivs) {
        out.grad(j) += 1.0 / s;
        out.hess(j, j) += 1.0 / (s * s);
      }
    }
  }
  out.feasible = true;
  return out;
}

// Largest step along dz keeping every cone and bound strictly feasible.
Real max_feasible_step(const ProblemR& p, const VecX& z, const VecX& dz) {
  Real alpha = kRInf;
  auto cut = [&alpha](Real candidate) {
    if (candidate > 0.0 && candidate < alpha) alpha = candidate;
  };
  for (const auto& cone : p.cones) {
    const Real r = cone.c.dot(z) + cone.d;
    const Real dr = cone.c.dot(dz);
    if (dr < 0.0) cut(-r / dr);
    const VecX u = cone.A * z + cone.b;
    const VecX du = cone.A * dz;
    // sigma(alpha) = (r + a dr)^2 - ||u + a du||^2, positive at a = 0.
    const Real qa = dr * dr - du.squaredNorm();
    const Real qb = 2.0 * (r * dr - u.dot(du));
    const Real qc = r * r - u.squaredNorm();
    if (std::abs(static_cast<double>(qa)) < 1e-300) {
      if (qb < 0.0) cut(-qc / qb);
    } else {
      const Real disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const Real sq = std::sqrt(static_cast<double>(disc));
        cut((-qb - sq) / (2.0 * qa));
        cut((-qb + sq) / (2.0 * qa));
      }
    }
  }
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (p.lower(j) > -kRInf && dz(j) < 0.0) cut((p.lower(j) - z(j)) / dz(j));
    if (p.upper(j) < kRInf && dz(j) > 0.0) cut((p.upper(j) - z(j)) / dz(j));
  }
  return alpha;
}

// Newton descent on obj^T z + phi(z)/t (the 1/t scaling keeps line-search
// decrements above rounding noise at large t); returns consumed iterations.
int center(const ProblemR& p, Real t, VecX& z, int budget) {
  const Eigen::Index nv = z.size();
  int used = 0;
  while (used < budget) {
    const BarrierEval be = eval_barrier(p, z, true);
    if (!be.feasible) break;
    const VecX grad = p.objective + be.grad / t;
    const Real gscale = std::max<Real>(1.0, p.objective.norm());
    if (grad.norm() <= 1e-9 * gscale) break;

    // Jacobi-scale the Newton system; near-active barrier terms blow up the
    // diagonal spread and an unscaled factorization loses the direction.
    const MatX H = be.hess / t;
    VecX scale(nv);
    for (Eigen::Index j = 0; j < nv; ++j)
      scale(j) = 1.0 / std::sqrt(std::max<Real>(
                     H(j, j), std::numeric_limits<Real>::min()));
    const MatX Hs = scale.asDiagonal() * H * scale.asDiagonal();
    const VecX gs = scale.asDiagonal() * grad;
    VecX step;
    Real reg = 0.0;
    for (;;) {
      Eigen::LLT<MatX> llt(Hs + reg * MatX::Identity(nv, nv));
      if (llt.info() == Eigen::Success) {
        step = -(scale.asDiagonal() * llt.solve(gs)).eval();
        if (step.dot(grad) < 0.0) break;
      }
      reg = (reg == 0.0) ? Real(1e-14) : 10.0 * reg;
      if (reg > 1e30) {
        step = -grad;
        break;
      }
    }

    const Real f0 = p.objective.dot(z) + be.value / t;
    const Real slope = grad.dot(step);
    Real alpha = std::min<Real>(1.0, 0.99 * max_feasible_step(p, z, step));
    bool accepted = false;
    while (alpha >= 1e-16) {
      const VecX zn = z + alpha * step;
      const BarrierEval trial = eval_barrier(p, zn, false);
      if (trial.feasible &&
          p.objective.dot(zn) + trial.value / t <=
              f0 + kArmijo * alpha * slope) {
        if ((zn - z).cwiseAbs().maxCoeff() <=
            1e-18 * (1.0 + z.cwiseAbs().maxCoeff())) {
          accepted = false;  // stalled at machine precision
          break;
        }
        z = zn;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++used;
    if (!accepted) break;
  }
  return used;
}

// One fraction-to-boundary-capped move along the central-path tangent
// z'(t) = -hess(phi)^{-1} obj; cuts the damped phase after each t jump.
void predict_along_path(const ProblemR& p, VecX& z, Real dt) {
  const Eigen::Index nv = z.size();
  const BarrierEval be = eval_barrier(p, z, true);
  if (!be.feasible) return;
  VecX scale(nv);
  for (Eigen::Index j = 0; j < nv; ++j)
    scale(j) = 1.0 / std::sqrt(std::max<Real>(
                   be.hess(j, j), std::numeric_limits<Real>::min()));
  const MatX Hs = scale.asDiagonal() * be.hess * scale.asDiagonal();
  Eigen::LLT<MatX> llt(Hs + Real(1e-18) * MatX::Identity(nv, nv));
  if (llt.info() != Eigen::Success) return;
  const VecX tangent =
      -(scale.asDiagonal() * llt.solve(scale.asDiagonal() * p.objective))
           .eval();
  const VecX step = dt * tangent;
  const Real alpha = std::min<Real>(1.0, 0.9 * max_feasible_step(p, z, step));
  const VecX zn = z + alpha * step;
  if (eval_barrier(p, zn, false).feasible) z = zn;
}

VecX initial_point(const ProblemR& p) {
  VecX z = VecX::Zero(p.num_vars());
  for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
    const Real lo = p.lower(j);
    const Real hi = p.upper(j);
    if (lo > -kRInf && hi < kRInf)
      z(j) = 0.5 * (lo + hi);
    else if (lo > -kRInf)
      z(j) = lo + 1.0;
    else if (hi < kRInf)
      z(j) = hi - 1.0;
  }
  return z;
}

// Fixed coordinates (upper == lower) are substituted out before solving.
struct Reduction {
  ProblemR reduced;
  std::vector<Eigen::Index> free_idx;
  VecX fixed_values;  // full-size, valid at fixed coordinates
};

Reduction reduce_fixed(const ProblemR& p) {
  Reduction red;
  const Eigen::Index nv = p.num_vars();
  red.fixed_values = VecX::Zero(nv);
  for (Eigen::Index j = 0; j < nv; ++j) {
    if (p.lower(j) > -kRInf && p.upper(j) < kRInf &&
        p.upper(j) - p.lower(j) <= 1e-12) {
      red.fixed_values(j) = 0.5 * (p.lower(j) + p.upper(j));
    } else {
      red.free_idx.push_back(j);
    }
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(red.free_idx.size());
  red.reduced.objective.resize(nf);
  red.reduced.lower.resize(nf);
  red.reduced.upper.resize(nf);
  for (Eigen::Index jj = 0; jj < nf; ++jj) {
    const Eigen::Index j = red.free_idx[jj];
    red.reduced.objective(jj) = p.objective(j);
    red.reduced.lower(jj) = p.lower(j);
    red.reduced.upper(jj) = p.upper(j);
  }
  for (const auto& cone : p.cones) {
    ConeR rc;
    rc.A.resize(cone.A.rows(), nf);
    rc.c.resize(nf);
    rc.b = cone.b + cone.A * red.fixed_values;
    rc.d = cone.d + cone.c.dot(red.fixed_values);
    for (Eigen::Index jj = 0; jj < nf; ++jj) {
      rc.A.col(jj) = cone.A.col(red.free_idx[jj]);
      rc.c(jj) = cone.c(red.free_idx[jj]);
    }
    red.reduced.cones.push_back(std::move(rc));
  }
  return red;
}

Eigen::VectorXd expand(const Reduction& red, const VecX& zr) {
  VecX z = red.fixed_values;
  for (std::size_t jj = 0; jj < red.free_idx.size(); ++jj)
    z(red.free_idx[jj]) = zr(static_cast<Eigen::Index>(jj));
  return z.cast<double>();
}

Real strict_margin(const ProblemR& p, const VecX& z) {
  Real margin = kRInf;
  for (const auto& cone : p.cones) {
    const Real r = cone.c.dot(z) + cone.d;
    margin = std::min<Real>(margin, r - (cone.A * z + cone.b).norm());
  }
  return margin;
}

// Phase I: minimize the shared cone slack w.
struct PhaseOneResult {
  bool strictly_feasible = false;
  Real w_star = kRInf;
  VecX z;
  int iterations = 0;
};

PhaseOneResult phase_one(const ProblemR& p) {
  PhaseOneResult out;
  VecX z0 = initial_point(p);
  if (strict_margin(p, z0) > 1e-9) {
    out.strictly_feasible = true;
    out.z = z0;
    return out;
  }

  const Eigen::Index nv = p.num_vars();
  ProblemR aug;
  aug.objective = VecX::Zero(nv + 1);
  aug.objective(nv) = 1.0;
  aug.lower = VecX::Constant(nv + 1, -kRInf);
  aug.upper = VecX::Constant(nv + 1, kRInf);
  aug.lower.head(nv) = p.lower;
  aug.upper.head(nv) = p.upper;
  Real w0 = 0.0;
  for (const auto& cone : p.cones) {
    ConeR ac = cone;
    ac.A.conservativeResize(Eigen::NoChange, nv + 1);
    ac.A.col(nv).setZero();
    ac.c.conservativeResize(nv + 1);
    ac.c(nv) = 1.0;
    w0 = std::max<Real>(
        w0, (cone.A * z0 + cone.b).norm() - cone.c.dot(z0) - cone.d);
    aug.cones.push_back(std::move(ac));
  }
  // Keep the phase-I objective bounded below.
  aug.lower(nv) = -1.0;

  VecX za(nv + 1);
  za.head(nv) = z0;
  za(nv) = w0 + 1.0;

  const Real nu = barrier_complexity(aug);
  Real t = 1.0;
  int used = 0;
  while (used < kMaxNewton) {
    const int budget = kMaxNewton - used;
    int step_used = 0;
    while (step_used < budget) {
      const int inc = center(aug, t, za, 1);
      step_used += std::max(inc, 1);
      if (strict_margin(p, za.head(nv)) > 1e-9) {
        out.strictly_feasible = true;
        out.z = za.head(nv);
        out.iterations = used + step_used;
        return out;
      }
      if (inc == 0) break;
    }
    used += std::max(step_used, 1);
    if (nu / t <= kGapTol) break;
    t *= 10.0;
  }
  out.w_star = za(nv);
  out.z = za.head(nv);
  out.iterations = used;
  return out;
}

// Residuals are measured relative to the constraint data magnitude; the
// representable stationarity floor grows with the coefficient scale.
Real data_scale(const ProblemR& p) {
  Real s = 1.0;
  for (const auto& cone : p.cones) {
    s = std::max<Real>(s, cone.c.norm() + std::abs(static_cast<double>(cone.d)));
    s = std::max<Real>(s, cone.A.norm() + cone.b.norm());
  }
  return s;
}

double kkt_residual_impl(const ProblemR& p, const VecX& z) {
  if (p.num_vars() == 0) return 0.0;
  const BarrierEval be = eval_barrier(p, z, true);
  if (!be.feasible) return kInf;
  const Real nu = barrier_complexity(p);
  const Real t = final_barrier_t(nu);
  return static_cast<double>(
      ((p.objective + be.grad / t).norm() + nu / t) / data_scale(p));
}

}  // namespace

void SOCProblem::validate() const {
  const Eigen::Index nv = num_vars();
  if (nv <= 0) throw std::invalid_argument("SOCProblem: empty objective");
  if (lower.size() && lower.size() != nv)
    throw std::invalid_argument("SOCProblem: lower bound size mismatch");
  if (upper.size() && upper.size() != nv)
    throw std::invalid_argument("SOCProblem: upper bound size mismatch");
  for (const auto& cone : cones) {
    if (cone.c.size() != nv || cone.A.cols() != nv ||
        cone.A.rows() != cone.b.size())
      throw std::invalid_argument("SOCProblem: cone dimension mismatch");
  }
  bool has_bound = false;
  for (Eigen::Index j = 0; j < nv; ++j) {
    if ((lower.size() && lower(j) > -kInf) || (upper.size() && upper(j) < kInf))
      has_bound = true;
  }
  if (cones.empty() && !has_bound)
    throw std::invalid_argument("SOCProblem: needs at least one cone or bound");
}

std::string SOCProblem::dump() const {
  std::ostringstream os;
  os.precision(17);
  os << "socp num_vars " << num_vars() << "\n";
  os << "objective";
  for (Eigen::Index j = 0; j < objective.size(); ++j) os << " " << objective(j);
  os << "\n";
  for (std::size_t i = 0; i < cones.size(); ++i) {
    const auto& cone = cones[i];
    os << "cone " << i << " rows " << cone.A.rows() << "\n";
    for (Eigen::Index r = 0; r < cone.A.rows(); ++r) {
      os << "  A";
      for (Eigen::Index j = 0; j < cone.A.cols(); ++j) os << " " << cone.A(r, j);
      os << " | b " << cone.b(r) << "\n";
    }
    os << "  c";
    for (Eigen::Index j = 0; j < cone.c.size(); ++j) os << " " << cone.c(j);
    os << " | d " << cone.d << "\n";
  }
  if (lower.size()) {
    os << "lower";
    for (Eigen::Index j = 0; j < lower.size(); ++j) os << " " << lower(j);
    os << "\n";
  }
  if (upper.size()) {
    os << "upper";
    for (Eigen::Index j = 0; j < upper.size(); ++j) os << " " << upper(j);
    os << "\n";
  }
  return os.str();
}

double max_violation(const SOCProblem& p, const Eigen::VectorXd& z) {
  double worst = 0.0;
  for (const auto& cone : p.cones) {
    const double slack = cone.c.dot(z) + cone.d - (cone.A * z + cone.b).norm();
    worst = std::max(worst, -slack);
  }
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (p.lower.size() && p.lower(j) > -kInf)
      worst = std::max(worst, p.lower(j) - z(j));
    if (p.upper.size() && p.upper(j) < kInf)
      worst = std::max(worst, z(j) - p.upper(j));
  }
  return worst;
}

double kkt_residual(const SOCProblem& p, const Eigen::VectorXd& z) {
  const Reduction red = reduce_fixed(to_real(p));
  VecX zr(red.free_idx.size());
  for (std::size_t jj = 0; jj < red.free_idx.size(); ++jj)
    zr(static_cast<Eigen::Index>(jj)) = z(red.free_idx[jj]);
  return kkt_residual_impl(red.reduced, zr);
}

SOCSolution solve(const SOCProblem& p) {
  p.validate();
  const Reduction red = reduce_fixed(to_real(p));
  SOCSolution sol;

  if (red.free_idx.empty()) {
    sol.z = red.fixed_values.cast<double>();
    sol.status = max_violation(p, sol.z) <= 1e-7 ? SOCStatus::Optimal
                                                 : SOCStatus::Infeasible;
    sol.kkt_residual = 0.0;
    return sol;
  }

  const PhaseOneResult ph1 = phase_one(red.reduced);
  sol.iterations = ph1.iterations;
  if (!ph1.strictly_feasible) {
    sol.z = expand(red, ph1.z);
    sol.status =
        ph1.w_star > 1e-7 ? SOCStatus::Infeasible : SOCStatus::MaxIter;
    sol.kkt_residual = kInf;
    return sol;
  }

  VecX z = ph1.z;
  const Real nu = barrier_complexity(red.reduced);
  Real t = 1.0;
  int used = 0;
  for (;;) {
    used += center(red.reduced, t, z, kMaxNewton - used);
    if (nu / t <= kGapTol || used >= kMaxNewton) break;
    const Real t_next = 10.0 * t;
    predict_along_path(red.reduced, z, t_next - t);
    t = t_next;
  }
  sol.iterations += used;
  sol.z = expand(red, z);
  sol.kkt_residual = kkt_residual_impl(red.reduced, z);
  const bool ok = nu / t <= kGapTol && max_violation(p, sol.z) <= 1e-7 &&
                  sol.kkt_residual <= 1e-6;
  sol.status = ok ? SOCStatus::Optimal : SOCStatus::MaxIter;
  return sol;
}

}  // namespace safegp
