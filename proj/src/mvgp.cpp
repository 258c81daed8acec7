#include "safegp/mvgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace safegp {

Eigen::VectorXd ubar(const Eigen::VectorXd& u) {
  Eigen::VectorXd ub(u.size() + 1);
  ub(0) = 1.0;
  ub.tail(u.size()) = u;
  return ub;
}

void Dataset::append(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                     const Eigen::VectorXd& xdot) {
  if (!X.empty() && (x.size() != X[0].size() || u.size() != U[0].size() ||
                     xdot.size() != Xdot[0].size()))
    throw DimensionError("Dataset::append dimension mismatch");
  X.push_back(x);
  U.push_back(u);
  Xdot.push_back(xdot);
}

void Dataset::validate() const {
  if (X.size() != U.size() || X.size() != Xdot.size())
    throw DimensionError("Dataset: unequal column lengths");
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != X[0].size() || U[i].size() != U[0].size() ||
        Xdot[i].size() != X[0].size())
      throw DimensionError("Dataset: inconsistent dimensions at row " +
                           std::to_string(i));
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t\r");
    const auto b = tok.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string()
                                         : tok.substr(a, b - a + 1));
  }
  return out;
}

int count_prefixed(const std::vector<std::string>& header,
                   const std::string& prefix) {
  int count = 0;
  for (const auto& h : header) {
    if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0 &&
        h.find_first_not_of("0123456789", prefix.size()) == std::string::npos)
      ++count;
  }
  return count;
}

}  // namespace

Dataset Dataset::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ":1: empty dataset file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw std::runtime_error(path + ":1: header must start with 't'");
  const int n = count_prefixed(header, "x");
  const int nu = count_prefixed(header, "u");
  const int nd = count_prefixed(header, "xdot");
  if (n <= 0 || nu <= 0 || nd != n)
    throw std::runtime_error(path + ":1: header must be t, x1..xn, u1..um, "
                                    "xdot1..xdotn");
  if (static_cast<int>(header.size()) != 1 + n + nu + nd)
    throw std::runtime_error(path + ":1: unexpected extra columns");

  Dataset ds;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tok = split_csv_line(line);
    if (static_cast<int>(tok.size()) != 1 + n + nu + nd)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": wrong field count");
    auto parse = [&](const std::string& s) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed number '" + s + "'");
      }
    };
    Eigen::VectorXd x(n), u(nu), xd(n);
    for (int i = 0; i < n; ++i) x(i) = parse(tok[1 + i]);
    for (int i = 0; i < nu; ++i) u(i) = parse(tok[1 + n + i]);
    for (int i = 0; i < n; ++i) xd(i) = parse(tok[1 + n + nu + i]);
    ds.append(x, u, xd);
  }
  return ds;
}

void Dataset::save_csv(const std::string& path, double dt) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  const int n = state_dim();
  const int nu = control_dim();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= nu; ++i) out << ",u" << i;
  for (int i = 1; i <= n; ++i) out << ",xdot" << i;
  out << "\n";
  out.precision(17);
  for (std::size_t r = 0; r < size(); ++r) {
    out << r * dt;
    for (int i = 0; i < n; ++i) out << "," << X[r](i);
    for (int i = 0; i < nu; ++i) out << "," << U[r](i);
    for (int i = 0; i < n; ++i) out << "," << Xdot[r](i);
    out << "\n";
  }
}

Eigen::VectorXd MVGPModel::project(const Eigen::VectorXd& x) const {
  if (input_mask.size() == 0) return x;
  return input_mask.cwiseProduct(x);
}

double MVGPModel::k0(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const {
  return kernel.k0(project(x), project(x2));
}

Eigen::VectorXd MVGPModel::k0_grad_x(const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& x2) const {
  Eigen::VectorXd g = kernel.k0_grad_x(project(x), project(x2));
  if (input_mask.size() != 0) g = input_mask.cwiseProduct(g);
  return g;
}

Eigen::MatrixXd MVGPModel::k0_hessian_xx2(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& x2) const {
  Eigen::MatrixXd H = kernel.k0_hessian_xx2(project(x), project(x2));
  if (input_mask.size() != 0)
    H = input_mask.asDiagonal() * H * input_mask.asDiagonal();
  return H;
}

Eigen::VectorXd MVGPModel::omega(const Eigen::VectorXd& x) const {
  Eigen::VectorXd w(train_size());
  for (std::size_t i = 0; i < train_size(); ++i) w(i) = k0(x, data.X[i]);
  return w;
}

Eigen::MatrixXd MVGPModel::grad_omega(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd G(n, train_size());
  for (std::size_t i = 0; i < train_size(); ++i)
    G.col(i) = k0_grad_x(x, data.X[i]);
  return G;
}

MVGPModel mvgp_prior(MeanFn mean_fn, MatrixKernelParams params,
                     RbfKernel kernel, int state_dim, int control_dim,
                     Eigen::VectorXd input_mask) {
  MVGPModel model;
  model.mean_fn = std::move(mean_fn);
  model.params = std::move(params);
  model.kernel = std::move(kernel);
  model.input_mask = std::move(input_mask);
  model.n = state_dim;
  model.m = control_dim;
  if (model.params.B().rows() != control_dim + 1)
    throw DimensionError("mvgp_prior: B must be (1+m) x (1+m)");
  if (model.params.A.rows() != state_dim)
    throw DimensionError("mvgp_prior: A must be n x n");
  return model;
}

MVGPModel condition(const MVGPModel& prior, const Dataset& data) {
  if (!prior.data.empty())
    throw std::invalid_argument("condition: prior already has data");
  data.validate();
  MVGPModel model = prior;
  model.data = data;
  const int k = static_cast<int>(data.size());
  if (k == 0) return model;
  if (data.state_dim() != model.n || data.control_dim() != model.m)
    throw DimensionError("condition: dataset dimensions do not match prior");

  const Eigen::MatrixXd& B = model.params.B();
  model.P.resize(model.m + 1, k);
  model.resid.resize(model.n, k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd ub = ubar(data.U[i]);
    model.P.col(i) = B * ub;
    model.resid.col(i) = data.Xdot[i] - model.mean_fn(data.X[i]) * ub;
  }

  Eigen::MatrixXd G(k, k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd ubi = ubar(data.U[i]);
    for (int j = i; j < k; ++j) {
      const double val =
          ubi.dot(model.P.col(j)) * model.k0(data.X[i], data.X[j]);
      G(i, j) = val;
      G(j, i) = val;
    }
  }
  G.diagonal().array() += model.params.sigma * model.params.sigma;

  const double base = G.diagonal().mean();
  for (double jitter : {1e-9 * base, 1e-6 * base}) {
    Eigen::MatrixXd Gj = G;
    Gj.diagonal().array() += jitter;
    model.gram_llt.compute(Gj);
    if (model.gram_llt.info() == Eigen::Success) {
      model.applied_jitter = jitter;
      model.gram = Gj;
      model.gram_inv =
          model.gram_llt.solve(Eigen::MatrixXd::Identity(k, k));
      model.resid_gram_inv = model.resid * model.gram_inv;
      return model;
    }
  }
  throw std::runtime_error(
      "condition: gram matrix not positive definite after jitter");
}

Eigen::MatrixXd posterior_M(const MVGPModel& model, const Eigen::VectorXd& x) {
  Eigen::MatrixXd M = model.mean_fn(x);
  if (model.train_size() == 0) return M;
  const Eigen::VectorXd w = model.omega(x);
  // W(x) = P diag(omega); M_k = M0 + resid G^{-1} W(x)^T
  M.noalias() +=
      model.resid_gram_inv * (w.asDiagonal() * model.P.transpose());
  return M;
}

Eigen::MatrixXd posterior_B(const MVGPModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2) {
  Eigen::MatrixXd Bk = model.params.B() * model.k0(x, x2);
  if (model.train_size() == 0) return Bk;
  const Eigen::VectorXd w = model.omega(x);
  const Eigen::VectorXd w2 = model.omega(x2);
  const Eigen::MatrixXd Wx = model.P * w.asDiagonal();
  const Eigen::MatrixXd Wx2 = model.P * w2.asDiagonal();
  Bk.noalias() -= Wx * model.gram_inv * Wx2.transpose();
  return Bk;
}

FPrediction predict_F(const MVGPModel& model, const Eigen::VectorXd& x) {
  FPrediction out;
  out.M = posterior_M(model, x);
  out.Bxx = clamp_psd(posterior_B(model, x, x));
  out.A = model.params.A;
  return out;
}

GaussianVector predict_Fu(const MVGPModel& model, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
  const Eigen::VectorXd ub = ubar(u);
  GaussianVector out;
  out.mean = posterior_M(model, x) * ub;
  const double scale = std::max(0.0, ub.dot(posterior_B(model, x, x) * ub));
  out.cov = scale * model.params.A;
  return out;
}

Eigen::VectorXd bk_first_row(const MVGPModel& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& x2) {
  return posterior_B(model, x, x2).row(0).transpose();
}

Eigen::MatrixXd jac_x_bk_first_row(const MVGPModel& model,
                                   const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& x2) {
  // B_k[0,s](x,x') = B[0,s] k0(x,x') - sum_ij P(0,i) k0(x,x_i) Ginv(i,j)
  //                  k0(x',x_j) P(s,j)
  Eigen::MatrixXd J =
      model.params.B().row(0).transpose() * model.k0_grad_x(x, x2).transpose();
  if (model.train_size() == 0) return J;
  const Eigen::VectorXd p0 = model.P.row(0).transpose();
  const Eigen::VectorXd w2 = model.omega(x2);
  const Eigen::MatrixXd dW = model.grad_omega(x);  // n x k
  // column s of M1 = dW diag(p0) Ginv (w2 .* p_s)
  const Eigen::MatrixXd M1 = (dW * p0.asDiagonal()) * model.gram_inv *
                             (w2.asDiagonal() * model.P.transpose());
  J.noalias() -= M1.transpose();
  return J;
}

Eigen::MatrixXd hess_xx2_bf(const MVGPModel& model, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& x2) {
  Eigen::MatrixXd H = model.params.B()(0, 0) * model.k0_hessian_xx2(x, x2);
  if (model.train_size() == 0) return H;
  const Eigen::VectorXd p0 = model.P.row(0).transpose();
  const Eigen::MatrixXd dW = model.grad_omega(x);    // n x k
  const Eigen::MatrixXd dW2 = model.grad_omega(x2);  // n x k
  H.noalias() -= (dW * p0.asDiagonal()) * model.gram_inv *
                 (p0.asDiagonal() * dW2.transpose());
  return H;
}

double ub_Bk_ub(const MVGPModel& model, const Eigen::VectorXd& x,
                const Eigen::VectorXd& x2, const Eigen::VectorXd& ub) {
  const double prior = ub.dot(model.params.B() * ub) * model.k0(x, x2);
  return prior + ub_Bk_ub_correction(model, x, x2, ub);
}

double ub_Bk_ub_correction(const MVGPModel& model, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& x2,
                           const Eigen::VectorXd& ub) {
  if (model.train_size() == 0) return 0.0;
  const Eigen::VectorXd q = model.P.transpose() * ub;  // q_i = ub^T B ub_i
  const Eigen::VectorXd psi = model.omega(x).cwiseProduct(q);
  const Eigen::VectorXd psi2 = model.omega(x2).cwiseProduct(q);
  return -psi.dot(model.gram_inv * psi2);
}

double variance_weighted_error(
    const MVGPModel& model,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>>& test) {
  if (test.empty())
    throw std::invalid_argument("variance_weighted_error: empty test set");
  double acc = 0.0;
  for (const auto& [x, F] : test) {
    const Eigen::MatrixXd D = posterior_M(model, x) - F;
    const Eigen::MatrixXd Bxx = clamp_psd(posterior_B(model, x, x));
    Eigen::MatrixXd K(Bxx.rows() * model.n, Bxx.cols() * model.n);
    for (Eigen::Index i = 0; i < Bxx.rows(); ++i)
      for (Eigen::Index j = 0; j < Bxx.cols(); ++j)
        K.block(i * model.n, j * model.n, model.n, model.n) =
            Bxx(i, j) * model.params.A;
    const Eigen::Map<const Eigen::VectorXd> v(D.data(), D.size());
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
      K.diagonal().array() += 1e-9 * std::max(1.0, K.diagonal().mean());
      llt.compute(K);
      if (llt.info() != Eigen::Success)
        throw IndefiniteMatrixError(
            "variance_weighted_error: singular K_k(x,x) after jitter");
    }
    acc += v.dot(llt.solve(v));
  }
  return std::sqrt(acc / static_cast<double>(test.size()));
}

}  // namespace safegp
