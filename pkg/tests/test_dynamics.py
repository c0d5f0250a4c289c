import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from hwdiffusion.dynamics import (
    GeneratorInput,
    MollifiedDrift,
    generator_apply,
    mollified_drift,
    mollified_jacobian,
    rho_eps,
    rho_eps_prime,
)
from hwdiffusion.errors import AsymmetricHessianError, BadEpsilonError
from hwdiffusion.model import derive_params, drift, operator_constant


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_rho_values(eps):
    assert rho_eps(eps, eps) == pytest.approx(eps, abs=1e-15)
    assert rho_eps(-eps, eps) == pytest.approx(0.0, abs=1e-15)
    assert rho_eps(0.0, eps) == pytest.approx(3 * eps / 16, rel=1e-14)
    assert rho_eps(2 * eps, eps) == 2 * eps
    assert rho_eps(-2 * eps, eps) == 0.0


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_rho_c1_junctions(eps):
    # inner polynomial and its derivative evaluated at the junctions
    inner = lambda y: 3 * eps / 16 - y**4 / (16 * eps**3) + 3 * y**2 / (8 * eps) + y / 2
    dinner = lambda y: -(y**3) / (4 * eps**3) + 3 * y / (4 * eps) + 0.5
    assert abs(inner(eps) - eps) <= 1e-12
    assert abs(inner(-eps)) <= 1e-12
    assert abs(dinner(eps) - 1.0) <= 1e-12
    assert abs(dinner(-eps)) <= 1e-12
    y = np.linspace(-eps, eps, 10_001)
    d = rho_eps_prime(y, eps)
    assert d.min() >= 0 and d.max() <= 1.0


def test_rho_derivative_matches_difference():
    eps = 0.1
    y = np.linspace(-0.3, 0.3, 97)
    h = 1e-6
    fd = (rho_eps(y + h, eps) - rho_eps(y - h, eps)) / (2 * h)
    np.testing.assert_allclose(rho_eps_prime(y, eps), fd, atol=1e-6)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 2.0])
def test_bad_epsilon(eps):
    with pytest.raises(BadEpsilonError):
        rho_eps(0.0, eps)


def test_mollified_drift_regimes(two_phase_params):
    md = MollifiedDrift(two_phase_params, 0.1)
    x = np.array([0.5, 0.2])
    np.testing.assert_allclose(mollified_drift(md, x), drift(two_phase_params, x), atol=1e-15)
    x = np.array([-0.5, 0.2])
    pr = two_phase_params
    np.testing.assert_allclose(mollified_drift(md, x), -pr.beta * pr.p - pr.R @ x, atol=1e-15)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_mollification_error(two_phase_params, eps):
    md = MollifiedDrift(two_phase_params, eps)
    g = np.linspace(-1, 1, 201)
    x = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    err = np.linalg.norm(mollified_drift(md, x) - drift(two_phase_params, x), axis=1)
    assert err.max() <= operator_constant(two_phase_params) * eps


def test_pointwise_convergence(two_phase_params):
    x = np.array([0.01, 0.005])
    errs = [
        np.linalg.norm(mollified_drift(MollifiedDrift(two_phase_params, e), x) - drift(two_phase_params, x))
        for e in (0.1, 0.05, 0.025)
    ]
    assert errs[0] >= errs[1] >= errs[2]


def test_jacobian_regimes(two_phase_params):
    pr = two_phase_params
    md = MollifiedDrift(pr, 0.1)
    kink = np.outer(pr.drift_kink, np.ones(2))
    np.testing.assert_allclose(mollified_jacobian(md, [1.0, 0.0]), -pr.R + kink, atol=1e-15)
    np.testing.assert_allclose(mollified_jacobian(md, [-1.0, 0.0]), -pr.R, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_finite_difference(seed):
    rng = np.random.default_rng(seed)
    pr = derive_params(random_model(rng), normalize=True)
    md = MollifiedDrift(pr, 0.2)
    d = pr.d
    x = rng.normal(scale=0.1, size=d)
    h = 1e-5
    fd = np.column_stack(
        [(mollified_drift(md, x + h * e) - mollified_drift(md, x - h * e)) / (2 * h) for e in np.eye(d)]
    )
    J = mollified_jacobian(md, x)
    assert np.linalg.norm(J - fd) <= 1e-6 * max(1.0, np.linalg.norm(J))
    assert np.linalg.norm(J, 2) <= operator_constant(pr) * (1 + 1e-12)


def test_jacobian_batch_shape(two_phase_params):
    md = MollifiedDrift(two_phase_params, 0.1)
    x = np.zeros((4, 3, 2))
    assert mollified_jacobian(md, x).shape == (4, 3, 2, 2)


def test_generator_linear_and_quadratic(two_phase_params):
    pr = two_phase_params
    x = np.array([0.3, -0.7])
    lin = GeneratorInput(lambda y: (y[1], np.array([0.0, 1.0]), np.zeros((2, 2))), x)
    assert generator_apply(pr, lin) == pytest.approx(drift(pr, x)[1], abs=1e-15)
    quad = GeneratorInput(lambda y: (y @ y, 2 * y, 2 * np.eye(2)), x)
    assert generator_apply(pr, quad) == pytest.approx(2 * x @ drift(pr, x) + np.trace(pr.Sigma), rel=1e-14)


def test_generator_rejects_asymmetric(two_phase_params):
    gi = GeneratorInput(lambda y: (0.0, np.zeros(2), np.array([[0.0, 1.0], [0.0, 0.0]])), np.zeros(2))
    with pytest.raises(AsymmetricHessianError):
        generator_apply(two_phase_params, gi)
