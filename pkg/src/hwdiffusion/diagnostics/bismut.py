"""First-variation flows of the mollified chain and the Bismut gradient estimator.

For the mollified drift ``g_eps`` the Jacobian flow solves
``dJ/dr = grad g_eps(X_r) J`` and the gradient of ``E psi(X_t^x)`` in
direction ``u`` is ``E[psi(X_t) I_u(t)]`` with

    I_u(t) = (1/t) int_0^t <sigma^{-1} J_{0,r} u, dB_r>.

The integral must use the increments that drive the path; fresh noise would
give an estimator of zero.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from ..dynamics import MollifiedDrift, mollified_drift, mollified_jacobian, rho_eps_prime
from ..errors import BadIntervalError, ValidationError
from ..integrator import ensemble_run
from ..model import DiffusionParams

METHODS = ("expm", "euler")


def mollified_path(params: DiffusionParams, eps: float, x0, eta: float, n_steps: int, seed: int) -> np.ndarray:
    """One path of the mollified Euler-Maruyama chain, shape ``(n_steps + 1, d)``."""
    md = MollifiedDrift(params, eps)
    path = np.empty((n_steps + 1, params.d))

    def keep(k, x, db):
        path[k] = x[0]

    final = ensemble_run(params, np.atleast_2d(x0), eta, n_steps, seed, drift_fn=lambda y: mollified_drift(md, y), observer=keep)
    path[n_steps] = final[0]
    return path


def _step_index(time, eta, n):
    k = time / eta
    i = int(round(k))
    if abs(k - i) > 1e-9 * max(1.0, abs(k)) or not 0 <= i <= n:
        raise BadIntervalError(f"time {time!r} is not a grid point of the recorded path (eta={eta!r}, {n} steps)")
    return i


def jacobian_flow(params: DiffusionParams, path, eta: float, eps: float, s: float, t: float, method: str = "expm") -> np.ndarray:
    """Time-ordered product ``J_{s,t} = M_{n-1} ... M_m`` along a recorded path.

    ``M_k`` is ``expm(eta grad g_eps(X_k))`` or, with ``method="euler"``,
    ``I + eta grad g_eps(X_k)``. ``s`` and ``t`` must be multiples of
    ``eta`` within the path.
    """
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}")
    path = np.asarray(path, dtype=float)
    if not s <= t:
        raise BadIntervalError(f"need s <= t, got s={s!r}, t={t!r}")
    n = len(path) - 1
    i0, i1 = _step_index(s, eta, n), _step_index(t, eta, n)
    md = MollifiedDrift(params, eps)
    J = np.eye(params.d)
    if i1 == i0:
        return J
    A = mollified_jacobian(md, path[i0:i1]) * eta
    M = linalg.expm(A) if method == "expm" else np.eye(params.d) + A
    for k in range(i1 - i0):
        J = M[k] @ J
    return J


class _FlowStepper:
    """Per-step propagators ``M(x)`` for a batch, reusing the two constant regimes.

    ``grad g_eps = -R + rho'(e'x) (R - alpha I) p e'`` and ``rho'`` is exactly
    0 or 1 outside ``|e'x| <= eps``, so only states inside the band need a
    fresh matrix exponential.
    """

    def __init__(self, params, eps, eta, method):
        if method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        self.md = MollifiedDrift(params, eps)
        self.eps = eps
        self.eta = eta
        self.method = method
        d = params.d
        self.lin = -np.asarray(params.R)
        self.kink = np.outer(params.drift_kink, np.ones(d))
        if method == "expm":
            self.M0 = linalg.expm(self.lin * eta)
            self.M1 = linalg.expm((self.lin + self.kink) * eta)

    def apply(self, x, v):
        """``M(x_i) v_i`` for each row; ``v`` has shape ``(n, d)``."""
        s = rho_eps_prime(x.sum(axis=1), self.eps)
        if self.method == "euler":
            Av = v @ self.lin.T + s[:, None] * (v @ self.kink.T)
            return v + self.eta * Av
        out = np.where((s >= 1.0)[:, None], v @ self.M1.T, v @ self.M0.T)
        band = np.flatnonzero((s > 0.0) & (s < 1.0))
        if band.size:
            A = (self.lin + s[band, None, None] * self.kink) * self.eta
            out[band] = np.einsum("nij,nj->ni", linalg.expm(A), v[band])
        return out


def bismut_gradient(
    params: DiffusionParams,
    eps: float,
    x,
    u,
    t: float,
    n_paths: int,
    eta: float,
    psi,
    seed: int = 0,
    method: str = "expm",
):
    """Estimate ``grad_u E[psi(X_t^x)]`` for the mollified chain.

    ``I_u = (1/t) sum_k <sigma^{-1} J_{0,k eta} u, dB_k>`` is accumulated with
    the increments ``dB_k`` that drive the path. Returns ``(estimate, stderr)``.
    """
    if not t > 0:
        raise ValidationError("t must be > 0")
    if n_paths < 2:
        raise ValidationError("need at least 2 paths")
    d = params.d
    x = np.asarray(x, dtype=float).reshape(d)
    u = np.asarray(u, dtype=float).reshape(d)
    n_steps = max(1, round(t / eta))
    stepper = _FlowStepper(params, eps, eta, method)
    sinvT = params.sigma_inv.T
    v = np.broadcast_to(u, (n_paths, d)).copy()
    integral = np.zeros(n_paths)

    def observe(k, xk, db):
        nonlocal v
        integral[:] += np.einsum("ni,ni->n", v @ sinvT, db)
        v = stepper.apply(xk, v)

    start = np.broadcast_to(x, (n_paths, d))
    final = ensemble_run(params, start, eta, n_steps, seed, drift_fn=lambda y: mollified_drift(stepper.md, y), observer=observe)
    terms = np.asarray(psi(final), dtype=float) * (integral / (n_steps * eta))
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(n_paths))


def finite_difference_gradient(
    params: DiffusionParams,
    eps: float,
    x,
    u,
    t: float,
    n_paths: int,
    eta: float,
    psi,
    seed: int = 0,
    h: float = 1e-2,
):
    """Central difference ``(E psi(X_t^{x+hu}) - E psi(X_t^{x-hu})) / 2h`` with common random numbers."""
    d = params.d
    x = np.asarray(x, dtype=float).reshape(d)
    u = np.asarray(u, dtype=float).reshape(d)
    md = MollifiedDrift(params, eps)
    n_steps = max(1, round(t / eta))

    def run(x0):
        start = np.broadcast_to(x0, (n_paths, d))
        return ensemble_run(params, start, eta, n_steps, seed, drift_fn=lambda y: mollified_drift(md, y))

    diff = (np.asarray(psi(run(x + h * u)), float) - np.asarray(psi(run(x - h * u)), float)) / (2 * h)
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n_paths))
