#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "safegp/cogp.hpp"
#include "safegp/config.hpp"
#include "safegp/controller.hpp"
#include "safegp/lie.hpp"
#include "safegp/moments.hpp"
#include "safegp/socp.hpp"
#include "safegp/systems.hpp"
#include "safegp/trigger.hpp"

namespace py = pybind11;
using namespace safegp;

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "online dynamics learning with probabilistically safe control";

  py::register_exception<IndefiniteMatrixError>(mod, "IndefiniteMatrixError");

  // moments
  mod.def("quad_form_moments",
          [](const Eigen::VectorXd& xbar, const Eigen::MatrixXd& Sigma,
             const Eigen::MatrixXd& Lambda) {
            const auto qf = quad_form_moments(xbar, Sigma, Lambda);
            return std::make_pair(qf.mean, qf.var);
          },
          py::arg("xbar"), py::arg("sigma"), py::arg("lambda_"));
  mod.def("quad_form_cov_with_x", &quad_form_cov_with_x, py::arg("xbar"),
          py::arg("sigma"), py::arg("lambda_"));
  mod.def("psd_sqrt", &psd_sqrt, py::arg("matrix"));

  py::class_<GaussianVector>(mod, "GaussianVector")
      .def(py::init<>())
      .def_readwrite("mean", &GaussianVector::mean)
      .def_readwrite("cov", &GaussianVector::cov);

  // kernels
  py::class_<RbfKernel>(mod, "RbfKernel")
      .def(py::init<double, Eigen::MatrixXd>(), py::arg("signal_var"),
           py::arg("lengthscale_inv"))
      .def_static("isotropic", &RbfKernel::isotropic, py::arg("signal_var"),
                  py::arg("lengthscale"), py::arg("dim"))
      .def("k0", &RbfKernel::k0)
      .def("k0_grad_x", &RbfKernel::k0_grad_x)
      .def("k0_hessian_xx2", &RbfKernel::k0_hessian_xx2);

  py::class_<MatrixKernelParams>(mod, "MatrixKernelParams")
      .def_static("from_full", &MatrixKernelParams::from_full, py::arg("B"),
                  py::arg("A"), py::arg("sigma"))
      .def_property_readonly("B", &MatrixKernelParams::B)
      .def_readonly("A", &MatrixKernelParams::A)
      .def_readonly("sigma", &MatrixKernelParams::sigma);

  // mvgp
  py::class_<Dataset>(mod, "Dataset")
      .def(py::init<>())
      .def("append", &Dataset::append, py::arg("x"), py::arg("u"),
           py::arg("xdot"))
      .def("__len__", &Dataset::size)
      .def_static("load_csv", &Dataset::load_csv, py::arg("path"))
      .def("save_csv", &Dataset::save_csv, py::arg("path"),
           py::arg("dt") = 1.0);

  py::class_<MVGPModel>(mod, "MVGPModel")
      .def_property_readonly("train_size", &MVGPModel::train_size)
      .def_property_readonly("gram_dim", &MVGPModel::gram_dim);

  mod.def("mvgp_prior",
          [](MeanFn mean, const MatrixKernelParams& params,
             const RbfKernel& kernel, int n, int m, Eigen::VectorXd mask) {
            return mvgp_prior(std::move(mean), params, kernel, n, m,
                              std::move(mask));
          },
          py::arg("mean_fn"), py::arg("params"), py::arg("kernel"),
          py::arg("state_dim"), py::arg("control_dim"),
          py::arg("input_mask") = Eigen::VectorXd());
  mod.def("condition", &condition, py::arg("prior"), py::arg("data"));
  mod.def("predict_F",
          [](const MVGPModel& model, const Eigen::VectorXd& x) {
            const auto p = predict_F(model, x);
            return std::make_tuple(p.M, p.Bxx, p.A);
          },
          py::arg("model"), py::arg("x"));
  mod.def("predict_Fu", &predict_Fu, py::arg("model"), py::arg("x"),
          py::arg("u"));
  mod.def("variance_weighted_error", &variance_weighted_error,
          py::arg("model"), py::arg("test"));

  // socp
  py::class_<SOCone>(mod, "SOCone")
      .def(py::init<>())
      .def_readwrite("A", &SOCone::A)
      .def_readwrite("b", &SOCone::b)
      .def_readwrite("c", &SOCone::c)
      .def_readwrite("d", &SOCone::d);

  py::class_<SOCProblem>(mod, "SOCProblem")
      .def(py::init<>())
      .def_readwrite("objective", &SOCProblem::objective)
      .def_readwrite("cones", &SOCProblem::cones)
      .def_readwrite("lower", &SOCProblem::lower)
      .def_readwrite("upper", &SOCProblem::upper)
      .def("dump", &SOCProblem::dump);

  py::enum_<SOCStatus>(mod, "SOCStatus")
      .value("Optimal", SOCStatus::Optimal)
      .value("Infeasible", SOCStatus::Infeasible)
      .value("MaxIter", SOCStatus::MaxIter);

  py::class_<SOCSolution>(mod, "SOCSolution")
      .def_readonly("z", &SOCSolution::z)
      .def_readonly("status", &SOCSolution::status)
      .def_readonly("kkt_residual", &SOCSolution::kkt_residual)
      .def_readonly("iterations", &SOCSolution::iterations);

  mod.def("solve", &solve, py::arg("problem"));
  mod.def("kkt_residual", &kkt_residual, py::arg("problem"), py::arg("z"));

  // controller
  mod.def("gaussian_coeff", &gaussian_coeff, py::arg("p"));
  mod.def("cantelli_coeff", &cantelli_coeff, py::arg("p"));

  // trigger
  mod.def("state_deviation_bound", &state_deviation_bound,
          py::arg("xdot_norm"), py::arg("L_f"), py::arg("s"));
  mod.def("tau_rd1", &tau_rd1, py::arg("L_f"), py::arg("L_h"),
          py::arg("L_alpha"), py::arg("zeta"), py::arg("xdot_norm"));
  mod.def("tau_rdr", &tau_rdr, py::arg("L_f"), py::arg("L_h"),
          py::arg("zeta_b"), py::arg("xdot_norm"));

  // systems
  py::class_<PendulumParams>(mod, "PendulumParams")
      .def(py::init<>())
      .def_readwrite("mass", &PendulumParams::mass)
      .def_readwrite("length", &PendulumParams::length)
      .def_readwrite("gravity", &PendulumParams::gravity)
      .def_readwrite("theta_c", &PendulumParams::theta_c)
      .def_readwrite("delta_col", &PendulumParams::delta_col);

  mod.def("pendulum_f_g", &pendulum_f_g, py::arg("params"), py::arg("x"));
  mod.def("epsilon_greedy_reference", &epsilon_greedy_reference, py::arg("k"),
          py::arg("seed"), py::arg("u_min"), py::arg("u_max"));
  mod.def("integrate_step",
          [](const DynamicsFn& f_g, const Eigen::VectorXd& x,
             const Eigen::VectorXd& u, double dt, const std::string& method) {
            return integrate_step(f_g, x, u, dt,
                                  method == "euler" ? Integrator::Euler
                                                    : Integrator::RK4);
          },
          py::arg("f_g"), py::arg("x"), py::arg("u"), py::arg("dt"),
          py::arg("method") = "rk4");
}
