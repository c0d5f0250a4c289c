import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from hwdiffusion.errors import DegenerateInputError, DimensionMismatchError, ValidationError
from hwdiffusion.metrics import (
    EmpiricalSample,
    analytic_density_1d,
    random_directions,
    rate_fit,
    sliced_w1,
    w1_sorted_1d,
)


def brute_force_assignment(a, b):
    n = len(a)
    perms = np.array(list(itertools.permutations(range(n))))
    cost = np.abs(a[:, None] - b[None, :])
    return float(cost[np.arange(n), perms].sum(axis=1).min()) / n


def transport_lp(a, b):
    # uniform weights, unequal sizes: minimise sum c_ij pi_ij over couplings
    n, m = len(a), len(b)
    cost = np.abs(a[:, None] - b[None, :]).ravel()
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    rhs = np.r_[np.full(n, 1 / n), np.full(m, 1 / m)]
    return optimize.linprog(cost, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs").fun


def test_w1_examples():
    assert w1_sorted_1d([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert w1_sorted_1d([0.0], [3.0]) == 3.0
    assert w1_sorted_1d([0.0, 2.0], [1.0, 1.0]) == 1.0
    assert w1_sorted_1d([3.0, 1.0, 2.0], [0.0, 1.0, 2.0]) == pytest.approx(1.0)
    # {0} vs {0, 1}: half the mass moves by 1
    assert w1_sorted_1d([0.0], [0.0, 1.0]) == pytest.approx(0.5, abs=1e-15)


def test_w1_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        a, b = rng.normal(size=n), rng.normal(size=n)
        assert abs(w1_sorted_1d(a, b) - brute_force_assignment(a, b)) <= 1e-12


def test_w1_unequal_sizes_lp():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n, m = rng.integers(1, 9, 2)
        a, b = rng.normal(size=n), rng.normal(size=m)
        assert w1_sorted_1d(a, b) == pytest.approx(transport_lp(a, b), abs=1e-9)


def test_w1_weighted():
    a = EmpiricalSample([0.0, 1.0], weights=[3.0, 1.0])
    b = EmpiricalSample([0.0, 0.0, 0.0, 1.0])
    assert w1_sorted_1d(a, b) == pytest.approx(0.0, abs=1e-15)
    assert w1_sorted_1d(a, EmpiricalSample([0.0])) == pytest.approx(0.25)
    with pytest.raises(ValidationError):
        EmpiricalSample([0.0, 1.0], weights=[1.0, -1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30), st.integers(1, 30), st.integers(1, 30))
def test_w1_metric_properties(seed, n, m, k):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=n), rng.normal(size=m) * 2, rng.normal(size=k) + 1
    ab = w1_sorted_1d(a, b)
    assert ab >= 0 and w1_sorted_1d(a, a) == 0.0
    assert ab == pytest.approx(w1_sorted_1d(b, a), abs=1e-12)
    assert ab <= w1_sorted_1d(a, c) + w1_sorted_1d(c, b) + 1e-12
    # a translated copy sits at distance equal to the shift
    assert w1_sorted_1d(a, a + 0.7) == pytest.approx(0.7)


def test_w1_dimension_check():
    with pytest.raises(DimensionMismatchError):
        w1_sorted_1d(np.zeros((3, 2)), np.zeros(3))


@pytest.mark.parametrize("beta,alpha,s2", [(1.0, 0.5, 2.0), (1.0, 1.0, 2.0), (-0.5, 2.0, 0.7), (0.0, 1.0, 1.0)])
def test_density_properties(beta, alpha, s2):
    bench = analytic_density_1d(beta, alpha, s2)
    lo, hi = bench.quantile(1e-12), bench.quantile(1 - 1e-12)
    mass = integrate.quad(bench.pdf, lo, 0)[0] + integrate.quad(bench.pdf, 0, hi)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert bench.left_mass == pytest.approx(integrate.quad(bench.pdf, lo, 0)[0], abs=1e-9)
    u = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(bench.cdf(bench.quantile(u)), u, atol=1e-12)
    assert bench.mean() == pytest.approx(bench.expect(lambda t: t), abs=1e-8)
    # stationarity: int g(x) p(x) dx = 0 for the drift g
    g = lambda t: -beta - t + (1 - alpha) * max(t, 0.0)
    assert bench.expect(g) == pytest.approx(0.0, abs=1e-8)


def test_density_linear_case():
    # alpha = 1 is a plain OU process: N(-beta, sigma2 / 2)
    bench = analytic_density_1d(1.0, 1.0, 2.0)
    assert bench.mean() == pytest.approx(-1.0, abs=1e-12)
    assert bench.pdf(-1.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-12)
    assert bench.cdf(-1.0) == pytest.approx(0.5, abs=1e-14)


def test_density_rejects_bad_args():
    with pytest.raises(ValidationError):
        analytic_density_1d(1.0, 0.0, 2.0)
    with pytest.raises(ValidationError):
        analytic_density_1d(1.0, 1.0, -1.0)


def test_w1_against_benchmark_grid_doubling():
    bench = analytic_density_1d(1.0, 0.5, 2.0)
    x = bench.quantile(np.random.default_rng(5).uniform(size=20_000))
    w = w1_sorted_1d(x, bench)
    assert abs(w1_sorted_1d(x, bench, n_nodes=200_000) - w) <= 0.005 * w
    # exact samples of size n sit at distance O(n^{-1/2})
    assert w < 0.05


def test_random_directions():
    u = random_directions(3, 500, seed=1)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0)
    assert np.abs(u.mean(axis=0)).max() < 0.1
    assert np.array_equal(u, random_directions(3, 500, seed=1))


def test_sliced_w1_properties():
    rng = np.random.default_rng(3)
    a = EmpiricalSample(rng.normal(size=(300, 2)))
    b = EmpiricalSample(rng.normal(size=(200, 2)) + [1.0, 0.0])
    assert sliced_w1(a, a) == 0.0
    assert sliced_w1(a, b) == pytest.approx(sliced_w1(b, a), abs=1e-12)
    # shift by t along a unit vector: projected shift |t cos|, mean 2|t|/pi in 2-D
    shifted = EmpiricalSample(a.points + [2.0, 0.0])
    assert sliced_w1(a, shifted, n_directions=4000) == pytest.approx(4 / np.pi, rel=0.03)
    with pytest.raises(DimensionMismatchError):
        sliced_w1(a, EmpiricalSample(rng.normal(size=(10, 3))))
    with pytest.raises(DimensionMismatchError):
        sliced_w1(EmpiricalSample(np.zeros(4)), EmpiricalSample(np.ones(4)))


def test_rate_fit_examples():
    etas = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = rate_fit(list(zip(etas, 3 * etas**0.5)))
    assert fit.slope == pytest.approx(0.5) and fit.intercept == pytest.approx(np.log(3))
    assert fit.r2 == pytest.approx(1.0)
    with pytest.raises(DegenerateInputError):
        rate_fit([(0.1, 1.0)] * 4)
    with pytest.raises(DegenerateInputError):
        rate_fit([(0.1, 1.0), (0.2, 0.0), (0.3, 1.0), (0.4, 1.0)])
    with pytest.raises(DegenerateInputError):
        rate_fit([(0.1, 1.0), (0.2, 1.0)])
