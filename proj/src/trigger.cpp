#include "safegp/trigger.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <stdexcept>

#include "safegp/rng.hpp"

namespace safegp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::VectorXd> region_grid(const RegionBox& region,
                                         int per_axis) {
  const int n = static_cast<int>(region.center.size());
  std::vector<Eigen::VectorXd> pts;
  std::vector<int> idx(n, 0);
  const std::size_t total = static_cast<std::size_t>(std::pow(per_axis, n));
  pts.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Eigen::VectorXd x = region.center;
    for (int d = 0; d < n; ++d) {
      const int i = static_cast<int>(rem % per_axis);
      rem /= per_axis;
      const double frac =
          per_axis == 1 ? 0.0
                        : (2.0 * i / static_cast<double>(per_axis - 1) - 1.0);
      x(d) += frac * region.half_widths(d);
    }
    pts.push_back(std::move(x));
  }
  return pts;
}

// kappa^{dj}(x, x) = d^2/dx_j dx'_j [ubar^T B_k(x, x') ubar]: closed-form
// prior plus finite-difference posterior correction.
double kappa_dj(const MVGPModel& model, const Eigen::VectorXd& ub,
                const Eigen::VectorXd& x, int j) {
  const double ubBub = ub.dot(model.params.B() * ub);
  double val = ubBub * model.k0_hessian_xx2(x, x)(j, j);
  if (model.train_size() > 0) {
    const double h = 1e-5;
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const double cpp = ub_Bk_ub_correction(model, xp, xp, ub);
    const double cpm = ub_Bk_ub_correction(model, xp, xm, ub);
    const double cmp = ub_Bk_ub_correction(model, xm, xp, ub);
    const double cmm = ub_Bk_ub_correction(model, xm, xm, ub);
    val += (cpp - cpm - cmp + cmm) / (4.0 * h * h);
  }
  return std::max(val, 0.0);
}

}  // namespace

void RegionBox::validate() const {
  if (center.size() != half_widths.size())
    throw DimensionError("RegionBox: center/half_widths size mismatch");
  if (half_widths.minCoeff() <= 0.0)
    throw std::invalid_argument("RegionBox: half_widths must be positive");
}

LipschitzReport lipschitz_analytic(const MVGPModel& model,
                                   const Eigen::VectorXd& u,
                                   const RegionBox& region, double delta_L,
                                   int grid_per_axis) {
  region.validate();
  if (!(delta_L > 0.0 && delta_L < 1.0))
    throw std::invalid_argument("lipschitz_analytic: delta_L must be in (0,1)");
  const int n = model.n;
  const Eigen::VectorXd ub = ubar(u);
  const auto grid = region_grid(region, grid_per_axis);

  // kappa_max(j) = max_x kappa^{dj}(x, x); L_kappa(j) = max grid gradient norm.
  Eigen::VectorXd kappa_max = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd L_kappa = Eigen::VectorXd::Zero(n);
  const double fd = 1e-5;
  for (const auto& x : grid) {
    for (int j = 0; j < n; ++j) {
      kappa_max(j) = std::max(kappa_max(j), kappa_dj(model, ub, x, j));
      Eigen::VectorXd dgrad(n);
      for (int a = 0; a < n; ++a) {
        Eigen::VectorXd xp = x, xm = x;
        xp(a) += fd;
        xm(a) -= fd;
        dgrad(a) = (kappa_dj(model, ub, xp, j) - kappa_dj(model, ub, xm, j)) /
                   (2.0 * fd);
      }
      L_kappa(j) = std::max(L_kappa(j), dgrad.norm());
    }
  }

  const double r = region.diameter();
  const double log_term = std::sqrt(2.0 * std::log(2.0 * n * n / delta_L));
  LipschitzReport rep;
  rep.mode = LipschitzMode::Analytic;
  rep.delta_L = delta_L;
  rep.per_entry.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const double Aii = model.params.A(i, i);
    for (int j = 0; j < n; ++j) {
      const double kX = std::sqrt(Aii * kappa_max(j));
      rep.per_entry(i, j) =
          log_term * kX +
          12.0 * std::sqrt(6.0 * n) *
              std::max(kX, std::sqrt(r * Aii * L_kappa(j)));
    }
  }
  rep.L_f = std::sqrt(rep.per_entry.squaredNorm() / (double(n) * double(n)));
  return rep;
}

LipschitzReport lipschitz_numeric(const MVGPModel& model,
                                  const Eigen::VectorXd& u,
                                  const RegionBox& region, int grid_per_axis,
                                  int samples, std::uint64_t seed) {
  region.validate();
  const int n = model.n;
  const auto grid = region_grid(region, grid_per_axis);
  const std::size_t N = grid.size();
  if (N > 10000)
    throw std::invalid_argument("lipschitz_numeric: grid too large");
  const Eigen::VectorXd ub = ubar(u);

  // Joint Gaussian of f(x_g) = F(x_g) ubar over the grid: mean per node,
  // covariance C (x) A with C_gg' = ubar^T B_k(x_g, x_g') ubar.
  Eigen::MatrixXd mean(n, N);
  for (std::size_t g = 0; g < N; ++g)
    mean.col(g) = posterior_M(model, grid[g]) * ub;

  Eigen::MatrixXd C(N, N);
  for (std::size_t g = 0; g < N; ++g)
    for (std::size_t g2 = g; g2 < N; ++g2) {
      const double v = ub_Bk_ub(model, grid[g], grid[g2], ub);
      C(g, g2) = v;
      C(g2, g) = v;
    }
  // Jitter scaled to the gram itself: an absolute floor would manufacture
  // phantom sample slopes for near-deterministic models.
  const double cscale = C.diagonal().cwiseAbs().maxCoeff();
  C.diagonal().array() += 1e-9 * cscale + 1e-300;
  Eigen::LLT<Eigen::MatrixXd> lltC(C);
  if (lltC.info() != Eigen::Success) {
    C = clamp_psd(C, 0.0);
    C.diagonal().array() += 1e-7 * cscale + 1e-300;
    lltC.compute(C);
    if (lltC.info() != Eigen::Success)
      throw std::runtime_error("lipschitz_numeric: grid gram not PSD");
  }
  const Eigen::MatrixXd Lc = lltC.matrixL();
  const Eigen::MatrixXd La = psd_sqrt(model.params.A);

  // Neighbor pairs along each axis, with index strides of the flat grid.
  std::vector<std::size_t> stride(n, 1);
  for (int d = 1; d < n; ++d)
    stride[d] = stride[d - 1] * static_cast<std::size_t>(grid_per_axis);

  auto rng = make_rng(seed, "numeric-lipschitz");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd worst = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd Z(n, N);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < n; ++i)
      for (std::size_t g = 0; g < N; ++g) Z(i, g) = gauss(rng);
    const Eigen::MatrixXd F = mean + La * Z * Lc.transpose();
    for (std::size_t g = 0; g < N; ++g) {
      std::size_t rem = g;
      for (int d = 0; d < n; ++d) {
        const int idx = static_cast<int>(rem % grid_per_axis);
        rem /= grid_per_axis;
        if (idx + 1 >= grid_per_axis) continue;
        const std::size_t g2 = g + stride[d];
        const double dx = grid[g2](d) - grid[g](d);
        if (dx <= 0.0) continue;
        for (int i = 0; i < n; ++i) {
          const double slope = std::abs(F(i, g2) - F(i, g)) / dx;
          if (slope > worst(i, d)) worst(i, d) = slope;
        }
      }
    }
  }

  LipschitzReport rep;
  rep.mode = LipschitzMode::Numeric;
  rep.delta_L = 0.0;
  rep.per_entry = worst;
  rep.L_f = std::sqrt(worst.squaredNorm() / (double(n) * double(n)));
  return rep;
}

double state_deviation_bound(double xdot_norm, double L_f, double s) {
  if (L_f < 0.0 || s < 0.0)
    throw std::invalid_argument("state_deviation_bound: negative input");
  if (L_f * s < 1e-12) return s * xdot_norm * (1.0 + 0.5 * L_f * s);
  return xdot_norm / L_f * std::expm1(s * L_f);
}

double tau_rd1(double L_f, double L_h, double L_alpha, double zeta,
               double xdot_norm) {
  if (xdot_norm <= 0.0) return kInf;
  const double denom = (L_f + L_alpha) * L_h * xdot_norm;
  if (denom <= 0.0) return kInf;
  if (L_f < 1e-12) return zeta / denom;
  return std::log1p(L_f * zeta / denom) / L_f;
}

double tau_rdr(double L_f, double L_h, double zeta_b, double xdot_norm) {
  if (xdot_norm <= 0.0) return kInf;
  const double denom = L_h * xdot_norm;
  if (denom <= 0.0) return kInf;
  if (L_f < 1e-12) return zeta_b / denom;
  return std::log1p(L_f * zeta_b / denom) / L_f;
}

double grad_h_bound(const BarrierSpec& b, const RegionBox& region,
                    int grid_per_axis) {
  region.validate();
  double worst = 0.0;
  for (const auto& x : region_grid(region, grid_per_axis))
    worst = std::max(worst, b.grad_h(x).norm());
  return worst;
}

}  // namespace safegp
