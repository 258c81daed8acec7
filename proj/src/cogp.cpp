#include "safegp/cogp.hpp"

#include <cmath>
#include <stdexcept>

namespace safegp {

Eigen::MatrixXd kron(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
  Eigen::MatrixXd out(P.rows() * Q.rows(), P.cols() * Q.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      out.block(i * Q.rows(), j * Q.cols(), Q.rows(), Q.cols()) = P(i, j) * Q;
  return out;
}

double CoGPModel::k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const {
  if (input_mask.size() == 0) return kernel.k0(x, x2);
  return kernel.k0(input_mask.cwiseProduct(x), input_mask.cwiseProduct(x2));
}

Eigen::MatrixXd CoGPModel::sigma_contract(const Eigen::VectorXd& ub) const {
  // Sigma (ubar (x) I_n): (1+m)n x n
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Sigma.rows(), n);
  for (Eigen::Index s = 0; s < ub.size(); ++s)
    out.noalias() += Sigma.middleCols(s * n, n) * ub(s);
  return out;
}

CoGPModel cogp_prior(MeanFn mean_fn, Eigen::MatrixXd Sigma, RbfKernel kernel,
                     Eigen::MatrixXd S, int state_dim, int control_dim,
                     Eigen::VectorXd input_mask) {
  CoGPModel model;
  model.mean_fn = std::move(mean_fn);
  model.Sigma = std::move(Sigma);
  model.kernel = std::move(kernel);
  model.S = std::move(S);
  model.input_mask = std::move(input_mask);
  model.n = state_dim;
  model.m = control_dim;
  const Eigen::Index d = static_cast<Eigen::Index>(state_dim) *
                         (control_dim + 1);
  if (model.Sigma.rows() != d || model.Sigma.cols() != d)
    throw DimensionError("cogp_prior: Sigma must be (1+m)n x (1+m)n");
  if (model.S.rows() != state_dim || model.S.cols() != state_dim)
    throw DimensionError("cogp_prior: S must be n x n");
  return model;
}

CoGPModel cogp_condition(const CoGPModel& prior, const Dataset& data) {
  if (!prior.data.empty())
    throw std::invalid_argument("cogp_condition: prior already has data");
  data.validate();
  CoGPModel model = prior;
  model.data = data;
  const int k = static_cast<int>(data.size());
  if (k == 0) return model;
  if (data.state_dim() != model.n || data.control_dim() != model.m)
    throw DimensionError("cogp_condition: dataset dimensions mismatch");

  const int n = model.n;
  std::vector<Eigen::MatrixXd> contract(k);  // Sigma (ubar_i (x) I_n)
  model.resid.resize(k * n);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd ub = ubar(data.U[i]);
    contract[i] = model.sigma_contract(ub);
    model.resid.segment(i * n, n) =
        data.Xdot[i] - model.mean_fn(data.X[i]) * ub;
  }

  Eigen::MatrixXd G(k * n, k * n);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd ubi = ubar(data.U[i]);
    for (int j = i; j < k; ++j) {
      // (ubar_i^T (x) I) Sigma (ubar_j (x) I) kappa0(x_i, x_j)
      Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(n, n);
      for (Eigen::Index s = 0; s < ubi.size(); ++s)
        blk.noalias() += ubi(s) * contract[j].middleRows(s * n, n);
      blk *= model.k0(data.X[i], data.X[j]);
      if (i == j) blk += model.S;
      G.block(i * n, j * n, n, n) = blk;
      G.block(j * n, i * n, n, n) = blk.transpose();
    }
  }

  const double base = G.diagonal().mean();
  for (double jitter : {1e-9 * base, 1e-6 * base}) {
    Eigen::MatrixXd Gj = G;
    Gj.diagonal().array() += jitter;
    model.gram_llt.compute(Gj);
    if (model.gram_llt.info() == Eigen::Success) {
      model.applied_jitter = jitter;
      model.gram = Gj;
      model.gram_solve_resid = model.gram_llt.solve(model.resid);
      return model;
    }
  }
  throw std::runtime_error("cogp_condition: singular gram after jitter");
}

namespace {

// K(x) = [kappa0(x_j, x) Sigma (ubar_j (x) I_n)]_j, (1+m)n x kn
Eigen::MatrixXd cross_cov(const CoGPModel& model, const Eigen::VectorXd& x) {
  const int k = static_cast<int>(model.train_size());
  const int n = model.n;
  Eigen::MatrixXd Kx(model.Sigma.rows(), k * n);
  for (int j = 0; j < k; ++j) {
    const Eigen::VectorXd ub = ubar(model.data.U[j]);
    Kx.middleCols(j * n, n) =
        model.k0(model.data.X[j], x) * model.sigma_contract(ub);
  }
  return Kx;
}

}  // namespace

GaussianVector cogp_predict(const CoGPModel& model, const Eigen::VectorXd& x) {
  GaussianVector out;
  const Eigen::MatrixXd M0 = model.mean_fn(x);
  out.mean = Eigen::Map<const Eigen::VectorXd>(M0.data(), M0.size());
  out.cov = model.Sigma * model.k0(x, x);
  if (model.train_size() > 0) {
    const Eigen::MatrixXd Kx = cross_cov(model, x);
    out.mean.noalias() += Kx * model.gram_solve_resid;
    out.cov.noalias() -= Kx * model.gram_llt.solve(Kx.transpose());
  }
  out.cov = clamp_psd(out.cov);
  return out;
}

double cogp_variance_weighted_error(
    const CoGPModel& model,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>>& test) {
  if (test.empty())
    throw std::invalid_argument("cogp_variance_weighted_error: empty test set");
  double acc = 0.0;
  for (const auto& [x, F] : test) {
    const GaussianVector post = cogp_predict(model, x);
    const Eigen::Map<const Eigen::VectorXd> f(F.data(), F.size());
    const Eigen::VectorXd v = post.mean - f;
    Eigen::MatrixXd K = post.cov;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
      K.diagonal().array() += 1e-9 * std::max(1.0, K.diagonal().mean());
      llt.compute(K);
      if (llt.info() != Eigen::Success)
        throw IndefiniteMatrixError(
            "cogp_variance_weighted_error: singular covariance");
    }
    acc += v.dot(llt.solve(v));
  }
  return std::sqrt(acc / static_cast<double>(test.size()));
}

}  // namespace safegp
