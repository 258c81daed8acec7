#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <filesystem>
#include <fstream>

#include "safegp/cogp.hpp"
#include "safegp/mvgp.hpp"
#include "test_support.hpp"

using namespace safegp;
using namespace safegp::test;

namespace {

struct DenseOracle {
  Eigen::MatrixXd mean;  // n x (1+m)
  Eigen::MatrixXd cov;   // (1+m)n x (1+m)n
};

// Full joint Gaussian over [vec(Xdot); vec(F(x*))] followed by one Schur
// complement; no Kronecker shortcuts anywhere. `jitter` is the diagonal
// shift the conditioned model folded into its gram (part of the effective
// noise variance).
DenseOracle dense_posterior(const MVGPModel& prior, const Dataset& ds,
                            const Eigen::VectorXd& xstar, double jitter) {
  const int n = prior.n;
  const int p = prior.m + 1;
  const int k = static_cast<int>(ds.size());
  const Eigen::MatrixXd& B = prior.params.B();
  const Eigen::MatrixXd& A = prior.params.A;

  Eigen::MatrixXd C11(k * n, k * n);
  Eigen::VectorXd m1(k * n);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd ubi = ubar(ds.U[i]);
    m1.segment(i * n, n) = prior.mean_fn(ds.X[i]) * ubi;
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd ubj = ubar(ds.U[j]);
      double scalar = ubi.dot(B * ubj) * prior.k0(ds.X[i], ds.X[j]);
      if (i == j) scalar += prior.params.sigma * prior.params.sigma + jitter;
      C11.block(i * n, j * n, n, n) = scalar * A;
    }
  }

  Eigen::MatrixXd C21(p * n, k * n);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd w = B * ubar(ds.U[i]) * prior.k0(xstar, ds.X[i]);
    for (int s = 0; s < p; ++s)
      C21.block(s * n, i * n, n, n) = w(s) * A;
  }
  const Eigen::MatrixXd C22 = kron(B * prior.k0(xstar, xstar), A);

  Eigen::VectorXd y(k * n);
  for (int i = 0; i < k; ++i) y.segment(i * n, n) = ds.Xdot[i];

  const Eigen::MatrixXd M0s = prior.mean_fn(xstar);
  const Eigen::Map<const Eigen::VectorXd> m2(M0s.data(), M0s.size());

  const Eigen::MatrixXd gain = C21 * C11.inverse();
  const Eigen::VectorXd mean_vec = m2 + gain * (y - m1);
  DenseOracle out;
  out.mean = Eigen::Map<const Eigen::MatrixXd>(mean_vec.data(), n, p);
  out.cov = C22 - gain * C21.transpose();
  return out;
}

MVGPModel make_prior(std::uint64_t seed, int n, int m, double sigma,
                     bool zero_mean = true) {
  auto rng = make_rng(seed, "prior");
  const Eigen::MatrixXd A = random_psd_matrix(rng, n);
  const Eigen::MatrixXd B = random_psd_matrix(rng, m + 1);
  MatrixKernelParams params = MatrixKernelParams::from_full(B, A, sigma);
  RbfKernel kernel = RbfKernel::isotropic(1.0, 1.0, n);
  MeanFn mean;
  if (zero_mean) {
    mean = [n, m](const Eigen::VectorXd&) {
      return Eigen::MatrixXd::Zero(n, 1 + m);
    };
  } else {
    const Eigen::MatrixXd W = random_matrix(rng, n, n, 0.3);
    mean = [W, n, m](const Eigen::VectorXd& x) {
      Eigen::MatrixXd M(n, 1 + m);
      M.col(0) = W * x;
      for (int c = 1; c <= m; ++c)
        M.col(c) = Eigen::VectorXd::Constant(n, 0.1 * c);
      return M;
    };
  }
  return mvgp_prior(std::move(mean), std::move(params), std::move(kernel), n,
                    m);
}

Dataset random_dataset(std::mt19937_64& rng, int k, int n, int m) {
  Dataset ds;
  for (int i = 0; i < k; ++i)
    ds.append(random_vector(rng, n), random_vector(rng, m),
              random_vector(rng, n));
  return ds;
}

}  // namespace

TEST_CASE("empty data leaves the prior untouched") {
  const MVGPModel prior = make_prior(1, 2, 1, 0.1, false);
  const MVGPModel post = condition(prior, Dataset{});
  auto rng = make_rng(2, "probe");
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    CHECK((posterior_M(post, x) - prior.mean_fn(x)).norm() <= 1e-14);
    CHECK((posterior_B(post, x, x) -
           prior.params.B() * prior.k0(x, x)).norm() <= 1e-14);
  }
}

TEST_CASE("huge noise keeps the posterior close to the prior") {
  const MVGPModel prior = make_prior(3, 2, 1, 1e6, false);
  auto rng = make_rng(4, "noise-data");
  const MVGPModel post = condition(prior, random_dataset(rng, 3, 2, 1));
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    CHECK((posterior_M(post, x) - prior.mean_fn(x)).norm() <= 1e-3);
  }
}

TEST_CASE("posterior matches the dense joint-Gaussian oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed, "dense-oracle");
    const int k = 1 + static_cast<int>(rng() % 5);
    const MVGPModel prior = make_prior(seed + 100, 2, 1, 0.05, seed % 2 == 0);
    const Dataset ds = random_dataset(rng, k, 2, 1);
    const MVGPModel post = condition(prior, ds);
    for (int probe = 0; probe < 5; ++probe) {
      const Eigen::VectorXd x = random_vector(rng, 2);
      const DenseOracle oracle =
          dense_posterior(prior, ds, x, post.applied_jitter);
      CHECK((posterior_M(post, x) - oracle.mean).cwiseAbs().maxCoeff() <= 1e-8);
      const Eigen::MatrixXd Kk = kron(posterior_B(post, x, x),
                                      post.params.A);
      CHECK((Kk - oracle.cov).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("training points are interpolated at small noise") {
  auto rng = make_rng(7, "interp");
  const MVGPModel prior = make_prior(8, 2, 1, 1e-4);
  Dataset ds;
  for (int i = 0; i < 4; ++i) {
    const Eigen::VectorXd x = 2.0 * random_vector(rng, 2);
    const Eigen::VectorXd u = random_vector(rng, 1);
    Eigen::VectorXd xdot = random_vector(rng, 2);
    ds.append(x, u, xdot);
  }
  const MVGPModel post = condition(prior, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Eigen::VectorXd pred =
        posterior_M(post, ds.X[i]) * ubar(ds.U[i]);
    CHECK((pred - ds.Xdot[i]).norm() <= 1e-2);
  }
}

TEST_CASE("conditioning never inflates the row covariance") {
  auto rng = make_rng(9, "loewner");
  const MVGPModel prior = make_prior(10, 2, 1, 0.05);
  const MVGPModel post = condition(prior, random_dataset(rng, 4, 2, 1));
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    const Eigen::MatrixXd gap =
        prior.params.B() * post.k0(x, x) - posterior_B(post, x, x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (gap + gap.transpose()), Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("posterior kernel symmetry and PSD clamping") {
  auto rng = make_rng(11, "sym");
  const MVGPModel post =
      condition(make_prior(12, 2, 1, 0.05), random_dataset(rng, 5, 2, 1));
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    const Eigen::VectorXd x2 = random_vector(rng, 2);
    CHECK((posterior_B(post, x, x2) -
           posterior_B(post, x2, x).transpose()).norm() <= 1e-10);
  }
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2, 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        predict_F(post, x).Bxx, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("information is monotone in the data") {
  auto rng = make_rng(13, "monotone");
  const MVGPModel prior = make_prior(14, 2, 1, 0.05);
  const Dataset full = random_dataset(rng, 8, 2, 1);
  const Eigen::VectorXd probe = random_vector(rng, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 8; k += 2) {
    Dataset sub;
    for (int i = 0; i < k; ++i) sub.append(full.X[i], full.U[i], full.Xdot[i]);
    const MVGPModel post = condition(prior, sub);
    const FPrediction pred = predict_F(post, probe);
    const double trace = pred.Bxx.trace() * pred.A.trace();
    CHECK(trace <= prev + 1e-10);
    prev = trace;
  }
}

TEST_CASE("only a k x k system is factorized") {
  auto rng = make_rng(15, "complexity");
  const int k = 6;
  const MVGPModel post =
      condition(make_prior(16, 3, 2, 0.05), random_dataset(rng, k, 3, 2));
  CHECK(post.gram_dim() == k);
  // Cached factor reproduces the gram matrix.
  const Eigen::MatrixXd L = post.gram_llt.matrixL();
  CHECK((L * L.transpose() - post.gram).norm() <= 1e-8 * post.gram.norm());
}

TEST_CASE("predict_Fu agrees with the explicit Kronecker contraction") {
  auto rng = make_rng(17, "fu");
  const MVGPModel post =
      condition(make_prior(18, 2, 1, 0.05), random_dataset(rng, 4, 2, 1));
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    const Eigen::VectorXd u = random_vector(rng, 1);
    const GaussianVector fu = predict_Fu(post, x, u);
    const Eigen::VectorXd ub = ubar(u);
    const FPrediction pred = predict_F(post, x);
    const Eigen::MatrixXd K = kron(pred.Bxx, pred.A);
    Eigen::MatrixXd ubI = kron(ub.transpose(), Eigen::MatrixXd::Identity(2, 2));
    const Eigen::MatrixXd cov_explicit = ubI * K * ubI.transpose();
    CHECK((fu.mean - pred.M * ub).norm() <= 1e-12);
    CHECK((fu.cov - cov_explicit).norm() <= 1e-12 * std::max(1.0, K.norm()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fu.cov,
                                                      Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
  // Zero prior covariance gives zero predictive covariance.
  MatrixKernelParams zero(Eigen::MatrixXd::Zero(2, 1),
                          Eigen::VectorXd::Zero(2),
                          Eigen::MatrixXd::Identity(2, 2), 0.1);
  MVGPModel det = mvgp_prior(
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2); },
      zero, RbfKernel::isotropic(1.0, 1.0, 2), 2, 1);
  CHECK(predict_Fu(det, Eigen::Vector2d(0.1, 0.2), Eigen::VectorXd::Ones(1))
            .cov.norm() == doctest::Approx(0.0));
}

TEST_CASE("variance weighted error") {
  auto rng = make_rng(19, "vwe");
  const MVGPModel post =
      condition(make_prior(20, 2, 1, 0.05), random_dataset(rng, 4, 2, 1));

  // Perfect predictions give zero error.
  std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>> perfect;
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    perfect.emplace_back(x, posterior_M(post, x));
  }
  CHECK(variance_weighted_error(post, perfect) <= 1e-10);

  // Against a dense computation.
  std::vector<std::pair<Eigen::VectorXd, Eigen::MatrixXd>> test;
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    const Eigen::MatrixXd F = random_matrix(rng, 2, 2);
    test.emplace_back(x, F);
    const Eigen::MatrixXd K =
        kron(clamp_psd(posterior_B(post, x, x)), post.params.A);
    const Eigen::MatrixXd D = posterior_M(post, x) - F;
    const Eigen::Map<const Eigen::VectorXd> v(D.data(), D.size());
    acc += v.dot(K.inverse() * v);
  }
  CHECK(variance_weighted_error(post, test) ==
        doctest::Approx(std::sqrt(acc / 5.0)).epsilon(1e-10));

  CHECK_THROWS(variance_weighted_error(post, {}));
}

TEST_CASE("posterior derivative helpers match finite differences") {
  auto rng = make_rng(21, "deriv");
  const MVGPModel post =
      condition(make_prior(22, 2, 1, 0.05), random_dataset(rng, 4, 2, 1));
  const double h = 1e-5;
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd x = random_vector(rng, 2);
    const Eigen::VectorXd x2 = random_vector(rng, 2);

    const Eigen::MatrixXd J = jac_x_bk_first_row(post, x, x2);
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) {
        Eigen::VectorXd xp = x, xm = x;
        xp(a) += h;
        xm(a) -= h;
        const double fd = (bk_first_row(post, xp, x2)(s) -
                           bk_first_row(post, xm, x2)(s)) /
                          (2.0 * h);
        CHECK(J(s, a) == doctest::Approx(fd).epsilon(1e-5));
      }

    const Eigen::MatrixXd H = hess_xx2_bf(post, x, x2);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        Eigen::VectorXd xp = x, xm = x;
        xp(a) += h;
        xm(a) -= h;
        Eigen::VectorXd yp = x2, ym = x2;
        yp(b) += h;
        ym(b) -= h;
        const double fd =
            (bk_first_row(post, xp, yp)(0) - bk_first_row(post, xp, ym)(0) -
             bk_first_row(post, xm, yp)(0) + bk_first_row(post, xm, ym)(0)) /
            (4.0 * h * h);
        CHECK(std::abs(H(a, b) - fd) <= 1e-4);
      }

    const Eigen::VectorXd u = random_vector(rng, 1);
    const Eigen::VectorXd ub = ubar(u);
    CHECK(ub_Bk_ub(post, x, x2, ub) ==
          doctest::Approx(ub.dot(posterior_B(post, x, x2) * ub))
              .epsilon(1e-12));
  }
}

TEST_CASE("kernel input mask restricts dependence to unmasked coordinates") {
  auto rng = make_rng(23, "mask");
  MVGPModel prior = make_prior(24, 3, 2, 0.05);
  prior.input_mask = Eigen::Vector3d(0.0, 0.0, 1.0);
  const MVGPModel post = condition(prior, random_dataset(rng, 4, 3, 2));
  Eigen::VectorXd x = random_vector(rng, 3);
  Eigen::VectorXd shifted = x;
  shifted(0) += 3.0;
  shifted(1) -= 1.0;
  CHECK((posterior_M(post, x) - posterior_M(post, shifted)).norm() <= 1e-13);
  CHECK((posterior_B(post, x, x) - posterior_B(post, shifted, shifted))
            .norm() <= 1e-13);
}

TEST_CASE("dataset csv round trip and error reporting") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "safegp_mvgp_test";
  fs::create_directories(dir);
  const std::string path = (dir / "data.csv").string();

  auto rng = make_rng(25, "csv");
  Dataset ds = random_dataset(rng, 6, 2, 1);
  ds.save_csv(path, 0.01);
  const Dataset loaded = Dataset::load_csv(path);
  REQUIRE(loaded.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK((loaded.X[i] - ds.X[i]).norm() <= 1e-15);
    CHECK((loaded.U[i] - ds.U[i]).norm() <= 1e-15);
    CHECK((loaded.Xdot[i] - ds.Xdot[i]).norm() <= 1e-15);
  }

  const std::string bad = (dir / "bad.csv").string();
  {
    std::ofstream out(bad);
    out << "t,x1,x2,u1,xdot1,xdot2\n";
    out << "0,1,2,3,4,5\n";
    out << "0.01,1,2,three,4,5\n";
  }
  try {
    Dataset::load_csv(bad);
    FAIL("expected malformed csv to throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}
