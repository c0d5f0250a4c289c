import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from hwdiffusion.diagnostics import (
    bismut_gradient,
    jacobian_flow,
    lyapunov_check,
    lyapunov_value_grad_hess,
    mollified_path,
    occupation_phi_eps,
    occupation_sweep,
    occupation_weight,
    phi,
    phi_prime,
    phi_second,
    radial_grid,
    search_kappa,
    solve_qtilde,
)
from hwdiffusion.dynamics import GeneratorInput, generator_apply
from hwdiffusion.errors import BadIntervalError, NoFeasibleQError, ValidationError
from hwdiffusion.model import PhaseTypeModel, derive_params, operator_constant
from hwdiffusion.testfunctions import tanh_sum


def test_phi_spline_junctions():
    # inner quartic and its derivatives, written out independently
    q = lambda z: z - z**3 - z**4 / 2
    dq = lambda z: 1 - 3 * z**2 - 2 * z**3
    ddq = lambda z: -6 * z - 6 * z**2
    for z, val, d1 in ((0.0, 0.0, 1.0), (-1.0, -0.5, 0.0)):
        assert abs(q(z) - val) <= 1e-12 and abs(dq(z) - d1) <= 1e-12 and abs(ddq(z)) <= 1e-12
    z = np.linspace(-1.5, 0.5, 2001)
    np.testing.assert_allclose(phi(z)[(z > -1) & (z < 0)], q(z[(z > -1) & (z < 0)]))
    assert phi(2.0) == 2.0 and phi(-3.0) == -0.5
    assert phi_prime(-0.5) == pytest.approx(dq(-0.5)) and phi_second(-0.5) == pytest.approx(ddq(-0.5))
    h = 1e-6
    fd = (phi(z + h) - phi(z - h)) / (2 * h)
    np.testing.assert_allclose(phi_prime(z), fd, atol=1e-8)


def _check_conditions(spec, params):
    R, p = params.R, params.p
    e = np.ones(params.d)
    Q = spec.Q
    assert np.linalg.eigvalsh(Q).min() > 0
    assert np.linalg.eigvalsh(-Q @ R - R.T @ Q).max() < 0
    B = -(np.eye(params.d) - np.outer(p, e)) @ R
    assert np.linalg.eigvalsh(Q @ B + B.T @ Q).max() <= 1e-9
    assert np.abs(Q).sum() == pytest.approx(1.0)


def test_qtilde_one_phase(bench_params):
    spec = solve_qtilde(bench_params)
    _check_conditions(spec, bench_params)
    assert spec.Q.shape == (1, 1)


def test_qtilde_two_phase(two_phase_params):
    spec = solve_qtilde(two_phase_params)
    _check_conditions(spec, two_phase_params)
    # the semi-definite form needs Q gamma parallel to e
    qg = spec.Q @ np.linalg.solve(two_phase_params.R, two_phase_params.p)
    assert qg[0] == pytest.approx(qg[1], rel=1e-6)


def test_qtilde_identity_routing():
    # R = I: the Lyapunov equation with D = I gives Q = I/2, already normalised
    pr = derive_params(PhaseTypeModel(P=np.zeros((2, 2)), v=[1.0, 1.0], p=[0.5, 0.5], alpha=0.7, beta=0.2))
    spec = solve_qtilde(pr)
    np.testing.assert_allclose(spec.Q, np.eye(2) / 2, atol=1e-14)
    assert spec.max_eig_strict == pytest.approx(-1.0)
    _check_conditions(spec, pr)


def test_qtilde_rejects_bad_kappa(bench_params):
    with pytest.raises(ValidationError):
        solve_qtilde(bench_params, kappa=0.0)


def test_qtilde_infeasible_reports(monkeypatch, two_phase_params):
    import hwdiffusion.diagnostics.lyapunov as ly

    monkeypatch.setattr(ly, "_constrained_search", lambda R, p, starts: starts[0])
    with pytest.raises(NoFeasibleQError):
        solve_qtilde(two_phase_params)


@pytest.fixture(scope="module")
def two_phase_spec(two_phase_params):
    spec = solve_qtilde(two_phase_params)
    lyapunov_check(spec, two_phase_params, n_radial=21, n_directions=8)
    return spec


def test_v_at_origin(two_phase_spec, two_phase_params):
    V, g, H = lyapunov_value_grad_hess(two_phase_spec, two_phase_params, np.zeros(2))
    assert V == two_phase_spec.c2hat
    np.testing.assert_array_equal(g, 0.0)
    # Hess V(0) = 2ee' + 2 kappa (I - pe')'Q(I - pe'); A V(0) = tr(Sigma Hess)/2
    e = np.ones(2)
    W = np.eye(2) - np.outer(two_phase_params.p, e)
    H0 = 2 * np.outer(e, e) + 2 * two_phase_spec.kappa * W.T @ two_phase_spec.Q @ W
    np.testing.assert_allclose(H, H0, atol=1e-14)
    f = lambda y: tuple(np.asarray(a) for a in lyapunov_value_grad_hess(two_phase_spec, two_phase_params, y))
    av = generator_apply(two_phase_params, GeneratorInput(lambda y: (float(f(y)[0]), f(y)[1], f(y)[2]), np.zeros(2)))
    assert av == pytest.approx(0.5 * np.trace(two_phase_params.Sigma @ H0), rel=1e-12)


def test_v_derivatives_finite_difference(two_phase_spec, two_phase_params):
    rng = np.random.default_rng(0)
    y = rng.normal(scale=1.5, size=(100, 2))
    V, g, H = lyapunov_value_grad_hess(two_phase_spec, two_phase_params, y)
    h = 1e-5
    for i, ei in enumerate(np.eye(2)):
        Vp = lyapunov_value_grad_hess(two_phase_spec, two_phase_params, y + h * ei)
        Vm = lyapunov_value_grad_hess(two_phase_spec, two_phase_params, y - h * ei)
        np.testing.assert_allclose(g[:, i], (Vp[0] - Vm[0]) / (2 * h), atol=1e-6)
        np.testing.assert_allclose(H[:, :, i], (Vp[1] - Vm[1]) / (2 * h), atol=1e-5)
    np.testing.assert_allclose(H, np.swapaxes(H, 1, 2), atol=0)


def test_lyapunov_bounds(two_phase_spec, two_phase_params):
    rep = two_phase_spec.constants
    assert rep["c1"] > 0 and rep["margin"] == rep["c1"]
    y = radial_grid(2, 10.0, 11, 8)
    V = lyapunov_value_grad_hess(two_phase_spec, two_phase_params, y)[0]
    n2 = np.sum(y * y, axis=1)
    assert np.all(V >= rep["c1_hat"] * n2 - 1e-9)
    assert np.all(V <= rep["C1_hat"] * n2 + rep["C2_hat"] + two_phase_spec.c2hat + 1e-9)


def test_lyapunov_one_phase(bench_params):
    rep = lyapunov_check(solve_qtilde(bench_params), bench_params)
    assert rep.c1 > 0 and rep.n_points == 81 * 2


def test_search_kappa_three_phase(three_phase_params):
    spec, rep = search_kappa(three_phase_params, n_radial=21, n_directions=16)
    assert rep.c1 > 0 and spec.kappa >= 1


def test_radial_grid_shapes():
    assert radial_grid(1, 2.0, 5, 99).shape == (10, 1)
    g = radial_grid(3, 2.0, 5, 7, seed=3)
    assert g.shape == (35, 3)
    np.testing.assert_allclose(np.linalg.norm(g[-7:], axis=1), 2.0)


def test_jacobian_flow_identity_and_bad_interval(two_phase_params):
    path = mollified_path(two_phase_params, 0.1, [0.0, 0.0], 0.01, 100, seed=1)
    assert path.shape == (101, 2)
    np.testing.assert_array_equal(jacobian_flow(two_phase_params, path, 0.01, 0.1, 0.3, 0.3), np.eye(2))
    with pytest.raises(BadIntervalError):
        jacobian_flow(two_phase_params, path, 0.01, 0.1, 0.5, 0.2)
    with pytest.raises(BadIntervalError):
        jacobian_flow(two_phase_params, path, 0.01, 0.1, 0.0, 0.005)
    with pytest.raises(BadIntervalError):
        jacobian_flow(two_phase_params, path, 0.01, 0.1, 0.0, 2.0)


def test_jacobian_flow_linear_regime(linear_params):
    # alpha = 1 removes the kink: J_{s,t} = expm(-R (t - s))
    path = mollified_path(linear_params, 0.1, [0.0], 0.01, 200, seed=2)
    J = jacobian_flow(linear_params, path, 0.01, 0.1, 0.5, 1.5)
    np.testing.assert_allclose(J, linalg.expm(-linear_params.R * 1.0), rtol=1e-12)


def test_jacobian_flow_composition(two_phase_params):
    path = mollified_path(two_phase_params, 0.05, [0.02, -0.01], 0.01, 150, seed=3)
    a = jacobian_flow(two_phase_params, path, 0.01, 0.05, 0.0, 0.7)
    b = jacobian_flow(two_phase_params, path, 0.01, 0.05, 0.7, 1.5)
    np.testing.assert_allclose(b @ a, jacobian_flow(two_phase_params, path, 0.01, 0.05, 0.0, 1.5), rtol=1e-12)


def test_jacobian_operator_norm_bound(two_phase_params):
    c = operator_constant(two_phase_params)
    t = 1.0
    for seed in range(100):
        path = mollified_path(two_phase_params, 0.1, [0.0, 0.0], 0.02, 50, seed=seed)
        J = jacobian_flow(two_phase_params, path, 0.02, 0.1, 0.0, t)
        assert np.linalg.norm(J, 2) <= np.exp(c * t) * (1 + 1e-12)


def test_bismut_zero_direction(two_phase_params):
    est, se = bismut_gradient(two_phase_params, 0.1, [0.0, 0.0], [0.0, 0.0], 0.5, 100, 0.01, tanh_sum, seed=1)
    assert est == 0.0 and se == 0.0


def test_bismut_methods_agree(two_phase_params):
    kw = dict(eps=0.1, x=[0.0, 0.0], u=[1.0, 0.0], t=0.5, n_paths=2000, eta=0.01, psi=tanh_sum, seed=3)
    a, _ = bismut_gradient(two_phase_params, method="expm", **kw)
    b, _ = bismut_gradient(two_phase_params, method="euler", **kw)
    # same noise, propagators differ by O(eta^2) per step
    assert a == pytest.approx(b, abs=1e-3)


def test_bismut_rejects_bad_args(two_phase_params):
    with pytest.raises(ValidationError):
        bismut_gradient(two_phase_params, 0.1, [0, 0], [1, 0], 0.0, 10, 0.01, tanh_sum)
    with pytest.raises(ValidationError):
        bismut_gradient(two_phase_params, 0.1, [0, 0], [1, 0], 1.0, 1, 0.01, tanh_sum)


def test_occupation_phi_examples():
    eps = 0.2
    val, d1, d2 = occupation_phi_eps(np.array([0.0, eps, -eps, 1.0]), eps)
    np.testing.assert_allclose(val[:3], [0.0, 5 * eps**2 / 12, 5 * eps**2 / 12])
    assert val[3] == pytest.approx(2 * eps / 3 - eps**2 / 4)
    np.testing.assert_allclose(d1, [0.0, 2 * eps / 3, -2 * eps / 3, 2 * eps / 3])
    np.testing.assert_allclose(d2, [1.0, 0.0, 0.0, 0.0])
    y = np.linspace(-0.5, 0.5, 1001)
    h = 1e-6
    v, g1, g2 = occupation_phi_eps(y, eps)
    np.testing.assert_allclose(g1, (occupation_phi_eps(y + h, eps)[0] - occupation_phi_eps(y - h, eps)[0]) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(g2, (occupation_phi_eps(y + h, eps)[1] - occupation_phi_eps(y - h, eps)[1]) / (2 * h), atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 1.0))
def test_occupation_weight_range(y, eps):
    w = float(occupation_weight(y, eps))
    assert 0.0 <= w <= 1.0
    assert (w > 0) == (abs(y) < eps)


def test_occupation_sweep_ordering(two_phase_params):
    est = occupation_sweep(two_phase_params, [0.0, 0.0], 2.0, [0.4, 0.2, 0.1], 200, 0.01, seed=5)
    vals = [e.estimate for e in est]
    # the weight is pointwise increasing in eps on shared paths
    assert vals[0] >= vals[1] >= vals[2] >= 0
    assert all(e.stderr > 0 for e in est)
    with pytest.raises(ValidationError):
        occupation_sweep(two_phase_params, [0.0, 0.0], 2.0, [0.0], 10, 0.01)
