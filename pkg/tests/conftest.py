import numpy as np
import pytest

from hwdiffusion.model import PhaseTypeModel, derive_params, exponential_service_model

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def two_phase_model():
    return PhaseTypeModel(P=[[0.0, 0.2], [0.0, 0.0]], v=[1.0, 2.0], p=[1.0, 0.0], alpha=0.5, beta=1.0, ca2=1.0)


def three_phase_model():
    return PhaseTypeModel(
        P=[[0, 0.5, 0.2], [0.1, 0, 0.3], [0, 0, 0]], v=[1, 2, 3], p=[0.5, 0.3, 0.2], alpha=2.0, beta=-0.5, ca2=0.7
    )


def random_model(rng, d=None):
    d = d or int(rng.integers(1, 6))
    P = rng.uniform(0, 1, (d, d)) * (rng.uniform(size=(d, d)) < 0.6)
    np.fill_diagonal(P, 0.0)
    rows = P.sum(axis=1, keepdims=True)
    P = np.where(rows > 0, P / np.maximum(rows, 1e-300) * rng.uniform(0.1, 0.95, (d, 1)), 0.0)
    p = rng.dirichlet(np.ones(d))
    return PhaseTypeModel(
        P=P, v=rng.uniform(0.3, 3.0, d), p=p, alpha=rng.uniform(0.1, 3), beta=rng.normal(), ca2=rng.uniform(0.2, 2)
    )


@pytest.fixture(scope="session")
def bench_params():
    return derive_params(exponential_service_model(0.5, 1.0))


@pytest.fixture(scope="session")
def linear_params():
    return derive_params(exponential_service_model(1.0, 1.0))


@pytest.fixture(scope="session")
def two_phase_params():
    return derive_params(two_phase_model(), normalize=True)


@pytest.fixture(scope="session")
def three_phase_params():
    return derive_params(three_phase_model(), normalize=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
