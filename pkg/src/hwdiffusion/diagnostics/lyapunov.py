"""Quadratic-type Lyapunov function for the piecewise-linear diffusion.

    V(y) = (e'y)^2 + kappa [y - p phi(e'y)]' Q [y - p phi(e'y)] + c2

where ``phi`` is a C^2 spline equal to ``z`` on ``z >= 0`` and to ``-1/2`` on
``z <= -1``. ``Q`` is positive definite with

    Q(-R) + (-R)'Q < 0   and   Q(-(I - p e')R) + (-R'(I - e p'))Q <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from ..dynamics import GeneratorInput, generator_apply
from ..errors import DriftConditionViolatedError, NoFeasibleQError, ValidationError
from ..integrator import make_rng
from ..model import DiffusionParams

STRICT_TOL = 1e-12
SEMI_TOL = 1e-9


def phi_inner(z):
    """The quartic used on ``-1 < z < 0`` and its first two derivatives."""
    z = np.asarray(z, dtype=float)
    return -0.5 * z**4 - z**3 + z, -2.0 * z**3 - 3.0 * z**2 + 1.0, -6.0 * z**2 - 6.0 * z


def phi(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, z, np.where(z <= -1, -0.5, phi_inner(z)[0]))


def phi_prime(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0, np.where(z <= -1, 0.0, phi_inner(z)[1]))


def phi_second(z):
    z = np.asarray(z, dtype=float)
    return np.where((z > -1) & (z < 0), phi_inner(z)[2], 0.0)


@dataclass
class LyapunovSpec:
    Q: np.ndarray
    kappa: float
    c2hat: float
    p: np.ndarray
    max_eig_strict: float
    max_eig_semi: float
    constants: dict = field(default_factory=dict)


def _conditions(Q, R, p):
    d = len(p)
    e = np.ones(d)
    A = -R
    strict = Q @ A + A.T @ Q
    B = -(np.eye(d) - np.outer(p, e)) @ R
    semi = Q @ B + B.T @ Q
    return float(np.linalg.eigvalsh(strict).max()), float(np.linalg.eigvalsh(0.5 * (semi + semi.T)).max())


def _constrained_search(R, p, starts):
    """Search the family ``{Q : Q gamma = e}`` with ``gamma`` proportional to ``R^{-1} p``.

    The semi-definite form vanishes at ``Q^{-1} e``, so it can only be
    non-positive when ``Q^{-1} e`` lies in the kernel of ``(I - p e')R``,
    i.e. ``Q gamma`` is parallel to ``e``. On that family ``gamma`` is an
    exact null vector and the remaining conditions are strict, so a
    Nelder-Mead search on the worst scaled eigenvalue can certify them.
    """
    d = len(p)
    e = np.ones(d)
    gam = np.linalg.solve(R, p)
    gg = gam @ gam
    Q0 = (np.outer(e, gam) + np.outer(gam, e)) / gg - (e @ gam) * np.outer(gam, gam) / gg**2
    # orthonormal basis of the complement of gamma
    U = linalg.null_space(gam[None, :])
    iu = np.triu_indices(d - 1)
    A = -R
    B = -(np.eye(d) - np.outer(p, e)) @ R

    def build(t):
        S = np.zeros((d - 1, d - 1))
        S[iu] = t
        S = S + np.triu(S, 1).T
        return Q0 + U @ S @ U.T

    def worst(t):
        Q = build(t)
        n = np.linalg.norm(Q)
        l1 = np.linalg.eigvalsh(Q @ A + A.T @ Q).max()
        l2 = np.linalg.eigvalsh(U.T @ (Q @ B + B.T @ Q) @ U).max()
        return max(l1, l2, -np.linalg.eigvalsh(Q).min()) / n

    best = None
    for Qs in starts:
        c = (e @ gam) / (gam @ Qs @ gam)
        S0 = U.T @ (c * Qs) @ U
        res = optimize.minimize(worst, S0[iu], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best[0]:
            best = (res.fun, build(res.x))
        if res.fun < -1e-8:
            break
    return best[1]


def solve_qtilde(params: DiffusionParams, kappa: float = 1.0) -> LyapunovSpec:
    """Find ``Q`` from ``Q(-R) + (-R)'Q = -D`` for ``D`` in ``I, diag(1..d), diag(d..1)``.

    If no such ``D`` gives a non-positive second form, ``Q`` is searched
    among matrices with ``Q R^{-1} p`` parallel to ``e`` (a necessary
    condition for that form). ``Q`` is scaled so its entries' absolute
    values sum to one.
    """
    if not kappa > 0:
        raise ValidationError("kappa must be > 0")
    d = params.d
    R = np.asarray(params.R)
    p = np.asarray(params.p)
    ramp = np.arange(1.0, d + 1.0)
    candidates = []
    for D in (np.eye(d), np.diag(ramp), np.diag(ramp[::-1])):
        # A X + X A' = C with A = -R', X = Q gives (-R)'Q + Q(-R) = C
        Q = linalg.solve_continuous_lyapunov(-R.T, -D)
        candidates.append(0.5 * (Q + Q.T))
    if d > 1:
        candidates.append(_constrained_search(R, p, list(candidates)))
    best = None
    for Q in candidates:
        Q = Q / np.abs(Q).sum()
        strict, semi = _conditions(Q, R, p)
        pd = np.linalg.eigvalsh(Q).min() > 0
        if pd and strict < -STRICT_TOL and semi <= SEMI_TOL:
            return LyapunovSpec(Q=Q, kappa=float(kappa), c2hat=0.0, p=p.copy(), max_eig_strict=strict, max_eig_semi=semi)
        if best is None or semi < best[1]:
            best = (strict, semi)
    raise NoFeasibleQError(
        f"no candidate Q satisfies both conditions (best: strict {best[0]:.3e}, semi-definite {best[1]:.3e})",
        max_eig_strict=best[0],
        max_eig_semi=best[1],
    )


def lyapunov_value_grad_hess(spec: LyapunovSpec, params: DiffusionParams, y):
    """``(V, grad V, Hess V)`` at ``y``; batch axes allowed (shapes ``(...)``, ``(..., d)``, ``(..., d, d)``)."""
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    e = np.ones(d)
    p = spec.p
    Q = spec.Q
    k = spec.kappa
    s = y.sum(axis=-1)
    ph, dph, ddph = phi(s), phi_prime(s), phi_second(s)
    w = y - ph[..., None] * p
    Qw = w @ Q
    V = s**2 + k * np.einsum("...i,...i->...", w, Qw) + spec.c2hat
    # Jacobian of w: I - dphi * p e'
    Jw = np.eye(d) - dph[..., None, None] * np.outer(p, e)
    grad = 2.0 * s[..., None] * e + 2.0 * k * np.einsum("...ji,...j->...i", Jw, Qw)
    pQw = Qw @ p
    hess = (
        2.0 * np.outer(e, e)
        + 2.0 * k * np.einsum("...ki,kl,...lj->...ij", Jw, Q, Jw)
        - 2.0 * k * (ddph * pQw)[..., None, None] * np.outer(e, e)
    )
    return V, grad, hess


def radial_grid(d: int, radius: float, n_radial: int, n_directions: int, seed: int = 0) -> np.ndarray:
    """Points ``r u`` for ``r`` in ``linspace(0, radius, n_radial)`` and unit ``u``.

    Directions are ``+-1`` in one dimension, equally spaced angles in two,
    and seeded Gaussian directions otherwise.
    """
    r = np.linspace(0.0, radius, n_radial)
    if d == 1:
        u = np.array([[1.0], [-1.0]])
    elif d == 2:
        th = 2.0 * np.pi * np.arange(n_directions) / n_directions
        u = np.column_stack([np.cos(th), np.sin(th)])
    else:
        g = make_rng(seed).standard_normal((n_directions, d))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
    return (r[:, None, None] * u[None, :, :]).reshape(-1, d)


@dataclass
class DriftReport:
    """Fitted drift inequality ``A V <= -c1 V + c1_breve`` on a grid.

    ``margin`` is ``c1``, the smallest ratio ``-A V / V`` on the outer half
    of the grid. The remaining constants bound ``V`` by ``|y|^2``.
    """

    c1: float
    c1_breve: float
    margin: float
    c1_hat: float
    C1_hat: float
    C2_hat: float
    c2hat: float
    n_points: int
    radius: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lyapunov_check(
    spec: LyapunovSpec,
    params: DiffusionParams,
    grid=None,
    radius: float = 20.0,
    n_radial: int = 81,
    n_directions: int = 32,
) -> DriftReport:
    """Fit the drift condition on a grid.

    ``c1`` is the smallest ``-A V(y) / V(y)`` over grid points with
    ``|y| >= radius/2`` (where quadratic terms dominate); ``c1_breve`` is then
    the largest ``A V + c1 V`` over the whole grid. The shift ``c2hat`` is
    refitted as ``max(0, -min V)``; ``spec`` is updated with the constants.
    """
    if grid is None:
        grid = radial_grid(params.d, radius, n_radial, n_directions)
    grid = np.asarray(grid, dtype=float)
    norms = np.linalg.norm(grid, axis=1)
    radius = float(norms.max())

    spec.c2hat = 0.0
    V0, _, _ = lyapunov_value_grad_hess(spec, params, grid)
    spec.c2hat = max(0.0, -float(V0.min()))
    V, _, _ = lyapunov_value_grad_hess(spec, params, grid)

    def f(y):
        val, g, h = lyapunov_value_grad_hess(spec, params, y)
        return float(val), g, h

    AV = np.array([generator_apply(params, GeneratorInput(f, y)) for y in grid])
    outer = norms >= 0.5 * radius
    ratio = -AV[outer] / V[outer]
    c1 = float(ratio.min())
    if not c1 > 0:
        raise DriftConditionViolatedError(f"A V >= 0 somewhere on the outer grid (min -AV/V = {c1:.3e})")
    c1_breve = float(np.max(AV + c1 * V))

    nz = norms > 0
    q = V[nz] / norms[nz] ** 2
    c1_hat = float(q.min())
    C1_hat = float((V[outer] / norms[outer] ** 2).max())
    C2_hat = max(0.0, float(np.max(V - spec.c2hat - C1_hat * norms**2)))
    report = DriftReport(
        c1=c1,
        c1_breve=c1_breve,
        margin=c1,
        c1_hat=c1_hat,
        C1_hat=C1_hat,
        C2_hat=C2_hat,
        c2hat=spec.c2hat,
        n_points=len(grid),
        radius=radius,
    )
    spec.constants = report.to_dict()
    return report


def search_kappa(params: DiffusionParams, max_doublings: int = 12, **grid_kw):
    """Smallest ``kappa = 2**j`` (``j = 0, 1, ...``) whose drift fit succeeds.

    Large ``kappa`` lets the ``Q``-form dominate the cross term between
    ``e'y`` and ``e'Ry``. Returns ``(spec, report)``.
    """
    last = None
    for j in range(max_doublings + 1):
        spec = solve_qtilde(params, kappa=float(2**j))
        try:
            return spec, lyapunov_check(spec, params, **grid_kw)
        except DriftConditionViolatedError as exc:
            last = exc
    raise DriftConditionViolatedError(f"no kappa up to 2**{max_doublings} gives a drift fit: {last}")
