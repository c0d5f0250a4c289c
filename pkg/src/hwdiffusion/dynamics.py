"""Mollified drift, its Jacobian, and the diffusion generator.

The drift ``g`` has a kink on the hyperplane ``e'x = 0``. Replacing ``(e'x)^+``
with the C^1 function ``rho_eps(e'x)`` gives a smooth field ``g_eps`` whose
Jacobian drives the first-variation flow used by the gradient estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AsymmetricHessianError, BadEpsilonError
from .model import DiffusionParams, drift


def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise BadEpsilonError(f"mollification width must lie in (0, 1), got {eps!r}")


def rho_eps(y, eps: float):
    """C^1 smoothing of ``max(y, 0)`` that differs from it only on ``|y| <= eps``."""
    _check_eps(eps)
    y = np.asarray(y, dtype=float)
    out = np.maximum(y, 0.0)
    band = np.abs(y) <= eps
    if out.ndim == 0:
        band, out = np.atleast_1d(band), np.atleast_1d(out)
    u = np.atleast_1d(y)[band] / eps
    # 3e/16 - y^4/(16e^3) + 3y^2/(8e) + y/2 in factored form
    out[band] = eps * (1.0 + u) ** 3 * (3.0 - u) / 16.0
    return out.reshape(y.shape) if y.ndim else float(out[0])


def rho_eps_prime(y, eps: float):
    """Derivative of :func:`rho_eps`; takes values in ``[0, 1]``."""
    _check_eps(eps)
    y = np.asarray(y, dtype=float)
    out = (y > eps).astype(float)
    band = np.abs(y) <= eps
    if out.ndim == 0:
        band, out = np.atleast_1d(band), np.atleast_1d(out)
    u = np.atleast_1d(y)[band] / eps
    out[band] = (1.0 + u) ** 2 * (2.0 - u) / 4.0
    return out.reshape(y.shape) if y.ndim else float(out[0])


@dataclass(frozen=True)
class MollifiedDrift:
    params: DiffusionParams
    epsilon: float

    def __post_init__(self):
        _check_eps(self.epsilon)


def mollified_drift(md: MollifiedDrift, x) -> np.ndarray:
    """``-beta p - R x + rho_eps(e'x) (R - alpha I) p``; batch axes allowed."""
    pr = md.params
    x = np.asarray(x, dtype=float)
    r = np.asarray(rho_eps(x.sum(axis=-1), md.epsilon))
    return pr.drift_constant + x @ pr.drift_linear.T + r[..., None] * pr.drift_kink


def mollified_jacobian(md: MollifiedDrift, x) -> np.ndarray:
    """Exact Jacobian ``-R + rho_eps'(e'x) (R - alpha I) p e'``.

    For batched ``x`` of shape ``(..., d)`` returns ``(..., d, d)``.
    """
    pr = md.params
    x = np.asarray(x, dtype=float)
    slope = np.asarray(rho_eps_prime(x.sum(axis=-1), md.epsilon))
    kink = np.outer(pr.drift_kink, np.ones(pr.d))
    return pr.drift_linear + slope[..., None, None] * kink


@dataclass(frozen=True)
class GeneratorInput:
    """A C^2 test function together with the point to evaluate the generator at.

    ``f`` returns ``(value, gradient, hessian)`` at a state.
    """

    f: Callable[[np.ndarray], tuple]
    x: np.ndarray


def generator_apply(params: DiffusionParams, gi: GeneratorInput) -> float:
    """``<grad f, g> + 1/2 <Sigma, Hess f>_HS`` with the exact drift."""
    x = np.asarray(gi.x, dtype=float)
    _, grad, hess = gi.f(x)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    scale = max(1.0, float(np.max(np.abs(hess))))
    if np.max(np.abs(hess - hess.T)) > 1e-9 * scale:
        raise AsymmetricHessianError("test-function Hessian is not symmetric")
    return float(grad @ drift(params, x) + 0.5 * np.sum(params.Sigma * hess))
