"""Weighted occupation time of the band ``|e'x| <= eps``.

    L_t = int_0^t [1 - (e'X_s)^2 / eps^2] 1{|e'X_s| <= eps} ds

The weight is the second derivative of the C^2 function ``phi_eps`` below,
which is what makes ``L_t`` accessible through Ito's formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..integrator import ensemble_run
from ..model import DiffusionParams


def _check(eps):
    if not eps > 0:
        raise ValidationError(f"eps must be > 0, got {eps!r}")


def occupation_weight(y, eps: float):
    _check(eps)
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= eps, 1.0 - y * y / (eps * eps), 0.0)


def occupation_phi_eps(y, eps: float):
    """``(phi_eps, phi_eps', phi_eps'')`` at ``y``.

    ``phi_eps(y) = -y^4/(12 eps^2) + y^2/2`` on ``|y| <= eps``, continued
    linearly with slope ``+-2 eps/3`` outside.
    """
    _check(eps)
    y = np.asarray(y, dtype=float)
    inside = np.abs(y) <= eps
    sgn = np.sign(y)
    val = np.where(inside, -(y**4) / (12 * eps**2) + 0.5 * y * y, 2 * eps / 3 * np.abs(y) - eps * eps / 4)
    d1 = np.where(inside, -(y**3) / (3 * eps**2) + y, 2 * eps / 3 * sgn)
    d2 = occupation_weight(y, eps)
    return val, d1, d2


@dataclass(frozen=True)
class OccupationEstimate:
    eps: float
    estimate: float
    stderr: float


def occupation_sweep(params: DiffusionParams, x, t: float, eps_list, n_paths: int, eta: float, seed: int = 0):
    """Estimates of ``E L_t`` for several ``eps`` on the same paths.

    The time integral is the left-point sum ``eta * sum_k weight(e'X_k)``.
    """
    eps_arr = [float(e) for e in eps_list]
    for e in eps_arr:
        _check(e)
    if not t > 0:
        raise ValidationError("t must be > 0")
    if n_paths < 2:
        raise ValidationError("need at least 2 paths")
    d = params.d
    n_steps = max(1, round(t / eta))
    acc = np.zeros((len(eps_arr), n_paths))

    def observe(k, xk, db):
        s = xk.sum(axis=1)
        for j, e in enumerate(eps_arr):
            acc[j] += occupation_weight(s, e)

    start = np.broadcast_to(np.asarray(x, dtype=float).reshape(d), (n_paths, d))
    ensemble_run(params, start, eta, n_steps, seed, observer=observe)
    acc *= eta
    return [
        OccupationEstimate(e, float(a.mean()), float(a.std(ddof=1) / math.sqrt(n_paths))) for e, a in zip(eps_arr, acc)
    ]


def occupation_time(params: DiffusionParams, x, t: float, eps_occ: float, n_paths: int, eta: float, seed: int = 0):
    """Estimate of ``E L_t^{eps, x}`` with its standard error."""
    return occupation_sweep(params, x, t, [eps_occ], n_paths, eta, seed)[0]
