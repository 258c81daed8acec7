"""End-to-end smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import safegp._core as core


def test_quad_form_moments():
    mean, var = core.quad_form_moments(np.zeros(3), np.eye(3), np.eye(3))
    assert mean == pytest.approx(3.0)
    assert var == pytest.approx(6.0)


def test_psd_sqrt_roundtrip():
    rng = np.random.default_rng(0)
    r = rng.normal(size=(4, 4))
    m = r @ r.T
    s = core.psd_sqrt(m)
    assert np.allclose(s @ s.T, m, atol=1e-8)


def test_kernel_and_posterior():
    kernel = core.RbfKernel.isotropic(1.0, 1.0, 2)
    assert kernel.k0(np.zeros(2), np.zeros(2)) == pytest.approx(1.0)

    params = core.MatrixKernelParams.from_full(np.eye(2), 0.1 * np.eye(2), 0.05)
    prior = core.mvgp_prior(lambda x: np.zeros((2, 2)), params, kernel, 2, 1)

    data = core.Dataset()
    rng = np.random.default_rng(1)
    for _ in range(5):
        data.append(rng.normal(size=2), rng.normal(size=1), rng.normal(size=2))
    post = core.condition(prior, data)
    assert post.train_size == 5
    assert post.gram_dim == 5  # k x k, never (k n) x (k n)

    M, Bxx, A = core.predict_F(post, np.zeros(2))
    assert M.shape == (2, 2)
    assert np.all(np.linalg.eigvalsh(Bxx) >= -1e-8)

    fu = core.predict_Fu(post, np.zeros(2), np.array([0.3]))
    assert fu.mean.shape == (2,)
    assert np.all(np.linalg.eigvalsh(fu.cov) >= -1e-10)


def test_socp_solver():
    prob = core.SOCProblem()
    prob.objective = np.array([1.0, 0.0, 0.0])
    cone = core.SOCone()
    cone.A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    cone.b = np.zeros(2)
    cone.c = np.array([1.0, 0.0, 0.0])
    cone.d = 0.0
    prob.cones = [cone]
    prob.lower = np.array([-np.inf, 3.0, 4.0])
    prob.upper = np.array([np.inf, 3.0, 4.0])
    sol = core.solve(prob)
    assert sol.status == core.SOCStatus.Optimal
    assert sol.z[0] == pytest.approx(5.0, abs=1e-6)
    assert core.kkt_residual(prob, sol.z) <= 1e-6


def test_coefficients_and_triggering():
    assert core.gaussian_coeff(0.5) == 0.0
    assert core.cantelli_coeff(0.8) == 2.0
    assert core.tau_rd1(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(math.log(1.5))
    assert core.state_deviation_bound(1.0, 1.0, 1.0) == pytest.approx(
        math.e - 1.0
    )


def test_pendulum_rollout_step():
    params = core.PendulumParams()
    f, g = core.pendulum_f_g(params, np.array([0.5, -0.1]))
    assert f.shape == (2,)
    x1 = core.integrate_step(
        lambda x: core.pendulum_f_g(params, x),
        np.array([0.5, -0.1]),
        np.array([0.2]),
        0.01,
    )
    assert x1.shape == (2,)
    u = core.epsilon_greedy_reference(0, 7, np.array([-20.0]), np.array([20.0]))
    assert -20.0 <= u[0] <= 20.0
