#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "safegp/lie.hpp"
#include "safegp/mvgp.hpp"

namespace safegp {

/// Axis-aligned cuboid around a state.
struct RegionBox {
  Eigen::VectorXd center;
  Eigen::VectorXd half_widths;

  void validate() const;
  double diameter() const { return 2.0 * half_widths.norm(); }
};

enum class LipschitzMode { Analytic, Numeric };

struct LipschitzReport {
  double L_f = 0.0;
  Eigen::MatrixXd per_entry;  // n x n of L_{i, dj}
  double delta_L = 0.0;
  LipschitzMode mode = LipschitzMode::Analytic;
};

/// High-probability bound on the Jacobian entries of f(x) = F(x) ubar under
/// the posterior GP, evaluated on a per-axis grid over the region. The
/// derived kernel kappa^{dj}(x, x') = d^2/dx_j dx'_j [ubar^T B_k(x,x') ubar]
/// uses the closed-form prior part plus a finite-difference posterior
/// correction (step 1e-5).
LipschitzReport lipschitz_analytic(const MVGPModel& model,
                                   const Eigen::VectorXd& u,
                                   const RegionBox& region, double delta_L,
                                   int grid_per_axis = 10);

/// Empirical bound: draw joint GP sample paths of F(x) ubar over the grid,
/// finite-difference them across neighboring nodes, and take the max slope.
LipschitzReport lipschitz_numeric(const MVGPModel& model,
                                  const Eigen::VectorXd& u,
                                  const RegionBox& region, int grid_per_axis,
                                  int samples, std::uint64_t seed);

/// (1/L) ||xdot|| (exp(s L) - 1); the L -> 0 limit is s ||xdot||.
double state_deviation_bound(double xdot_norm, double L_f, double s);

/// Relative-degree-one triggering time
/// (1/L_f) ln(1 + L_f zeta / ((L_f + L_alpha) L_h ||xdot||)).
double tau_rd1(double L_f, double L_h, double L_alpha, double zeta,
               double xdot_norm);

/// Higher-relative-degree triggering time
/// (1/L_f) ln(1 + L_f zeta_b / (L_h ||xdot||)).
double tau_rdr(double L_f, double L_h, double zeta_b, double xdot_norm);

/// Grid maximum of ||grad h|| over the region.
double grad_h_bound(const BarrierSpec& b, const RegionBox& region,
                    int grid_per_axis = 10);

}  // namespace safegp
