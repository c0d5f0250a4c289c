"""Wasserstein-1 distances and the closed-form one-dimensional stationary law.

In one dimension the diffusion ``dX = g(X) dt + sqrt(sigma2) dB`` with
``g(x) = -beta - x`` for ``x <= 0`` and ``-beta - alpha x`` for ``x > 0`` has
stationary density proportional to ``exp(2 G(x) / sigma2)``, ``G' = g``: two
Gaussian pieces glued continuously at zero. CDF and quantiles are available
in closed form through ``erfc``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DegenerateInputError, DimensionMismatchError, ValidationError
from .integrator import make_rng

QUANTILE_NODES = 4096


@dataclass(frozen=True)
class EmpiricalSample:
    """Points of shape ``(n, d)`` with optional weights (normalised on construction)."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),) or np.any(w < 0) or not w.sum() > 0:
                raise ValidationError("weights must be non-negative, one per point, with positive total")
            object.__setattr__(self, "weights", w / w.sum())

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Benchmark1D:
    """Stationary law of the one-dimensional piecewise Ornstein-Uhlenbeck diffusion.

    On ``x <= 0`` the density is a multiple of the N(-beta, sigma2/2) density,
    on ``x > 0`` of the N(-beta/alpha, sigma2/(2 alpha)) density; ``left_mass``
    is the probability of ``x <= 0``.
    """

    beta: float
    alpha: float
    sigma2: float
    log_Z: float
    left_mass: float

    @property
    def _left(self):
        return -self.beta, math.sqrt(self.sigma2 / 2.0)

    @property
    def _right(self):
        return -self.beta / self.alpha, math.sqrt(self.sigma2 / (2.0 * self.alpha))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        s2 = self.sigma2
        expo = np.where(x <= 0, -(x * x + 2 * self.beta * x) / s2, -(self.alpha * x * x + 2 * self.beta * x) / s2)
        return np.exp(expo - self.log_Z)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        (ml, sl), (mr, sr) = self._left, self._right
        left = self.left_mass * special.ndtr((np.minimum(x, 0) - ml) / sl) / special.ndtr(-ml / sl)
        # right piece through the survival function to keep tail precision
        sf = special.ndtr((mr - np.maximum(x, 0)) / sr) / special.ndtr(mr / sr)
        right = 1.0 - (1.0 - self.left_mass) * sf
        out = np.where(x <= 0, left, right)
        return out if out.ndim else float(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        (ml, sl), (mr, sr) = self._left, self._right
        phi_l0 = special.ndtr((0 - ml) / sl)
        sf_r0 = special.ndtr((mr - 0) / sr)
        with np.errstate(divide="ignore", invalid="ignore"):
            ql = ml + sl * special.ndtri(np.clip(u / self.left_mass, 0, 1) * phi_l0)
            tail = np.clip((1.0 - u) / (1.0 - self.left_mass), 0, 1) * sf_r0
            qr = mr - sr * special.ndtri(tail)
        out = np.where(u <= self.left_mass, ql, qr)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        (ml, sl), (mr, sr) = self._left, self._right
        # E[X; X<=0] for the left piece, E[X; X>0] for the right, each a truncated normal
        al = (0 - ml) / sl
        ar = (0 - mr) / sr
        m_left = ml - sl * special.ndtr(al) ** -1 * math.exp(-al * al / 2) / math.sqrt(2 * math.pi)
        m_right = mr + sr * math.exp(-ar * ar / 2) / math.sqrt(2 * math.pi) / special.ndtr(-ar)
        return float(self.left_mass * m_left + (1 - self.left_mass) * m_right)

    def expect(self, h) -> float:
        """``E h(X)`` by adaptive quadrature on each side of the kink."""
        from scipy import integrate

        lo = float(self.quantile(1e-14))
        hi = float(self.quantile(1 - 1e-14))
        a = integrate.quad(lambda t: h(t) * self.pdf(t), lo, 0.0, limit=200)[0]
        b = integrate.quad(lambda t: h(t) * self.pdf(t), 0.0, hi, limit=200)[0]
        return a + b


def analytic_density_1d(beta: float, alpha: float, sigma2: float) -> Benchmark1D:
    """Stationary law of ``dX = (-beta - x + (1 - alpha) x^+) dt + sqrt(sigma2) dB``."""
    if not alpha > 0 or not sigma2 > 0:
        raise ValidationError("need alpha > 0 and sigma2 > 0")
    sl = math.sqrt(sigma2 / 2.0)
    sr = math.sqrt(sigma2 / (2.0 * alpha))
    # log mass of each unnormalised piece: beta^2/(k sigma2) + log(sqrt(2 pi) s Phi(.))
    log_zl = beta**2 / sigma2 + math.log(math.sqrt(2 * math.pi) * sl) + special.log_ndtr(beta / sl)
    log_zr = (
        beta**2 / (alpha * sigma2) + math.log(math.sqrt(2 * math.pi) * sr) + special.log_ndtr(-(beta / alpha) / sr)
    )
    log_Z = float(np.logaddexp(log_zl, log_zr))
    return Benchmark1D(
        beta=float(beta), alpha=float(alpha), sigma2=float(sigma2), log_Z=log_Z, left_mass=float(math.exp(log_zl - log_Z))
    )


def _as_1d(a):
    if isinstance(a, EmpiricalSample):
        if a.d != 1:
            raise DimensionMismatchError(f"expected a one-dimensional sample, got d={a.d}")
        return a.points[:, 0], a.weights
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionMismatchError("expected a one-dimensional sample")
    return arr, None


def _empirical_quantile(x_sorted, w, u):
    if w is None:
        idx = np.minimum((u * len(x_sorted)).astype(np.int64), len(x_sorted) - 1)
        return x_sorted[idx]
    cw = np.cumsum(w)
    idx = np.minimum(np.searchsorted(cw, u, side="right"), len(x_sorted) - 1)
    return x_sorted[idx]


def w1_sorted_1d(a, b, n_nodes: int = QUANTILE_NODES) -> float:
    """Wasserstein-1 distance between one-dimensional measures.

    Two unweighted samples of equal size: ``mean |x_(i) - y_(i)|`` over sorted
    samples. Other pairs of samples: ``int |F_a - F_b| dx`` summed exactly
    over the merged support. Against a :class:`Benchmark1D` ``b``:
    ``int_0^1 |F_a^{-1}(u) - F_b^{-1}(u)| du`` by the midpoint rule on
    ``max(n_nodes, len(a))`` quantile levels.
    """
    xa, wa = _as_1d(a)
    order = np.argsort(xa, kind="stable")
    xa = xa[order]
    if wa is not None:
        wa = wa[order]
    if isinstance(b, Benchmark1D):
        n_nodes = max(n_nodes, len(xa))
        u = (np.arange(n_nodes) + 0.5) / n_nodes
        return float(np.mean(np.abs(_empirical_quantile(xa, wa, u) - b.quantile(u))))
    xb, wb = _as_1d(b)
    order_b = np.argsort(xb, kind="stable")
    xb = xb[order_b]
    if wb is not None:
        wb = wb[order_b]
    if wa is None and wb is None and len(xa) == len(xb):
        return float(np.mean(np.abs(xa - xb)))
    # int |F_a - F_b| dx over the merged support, exact for discrete measures
    wa = np.full(len(xa), 1.0 / len(xa)) if wa is None else wa
    wb = np.full(len(xb), 1.0 / len(xb)) if wb is None else wb
    grid = np.concatenate([xa, xb])
    order = np.argsort(grid, kind="stable")
    jumps = np.concatenate([wa, -wb])[order]
    diff = np.cumsum(jumps)[:-1]
    return float(np.sum(np.abs(diff) * np.diff(grid[order])))


def random_directions(d: int, n: int, seed: int) -> np.ndarray:
    """``n`` unit vectors uniform on the sphere in ``R^d``, shape ``(n, d)``."""
    g = make_rng(seed).standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_w1(a: EmpiricalSample, b: EmpiricalSample, n_directions: int = 128, seed: int = 0) -> float:
    """Monte-Carlo sliced W1: mean over random directions of the projected 1-D W1.

    A computable proxy for the multi-dimensional distance, not the distance itself.
    """
    if not isinstance(a, EmpiricalSample):
        a = EmpiricalSample(a)
    if not isinstance(b, EmpiricalSample):
        b = EmpiricalSample(b)
    if a.d != b.d:
        raise DimensionMismatchError(f"samples live in dimensions {a.d} and {b.d}")
    if a.d < 2:
        raise DimensionMismatchError("sliced distance needs d >= 2; use w1_sorted_1d")
    dirs = random_directions(a.d, n_directions, seed)
    pa = a.points @ dirs.T
    pb = b.points @ dirs.T
    vals = [
        w1_sorted_1d(EmpiricalSample(pa[:, k], a.weights), EmpiricalSample(pb[:, k], b.weights))
        for k in range(n_directions)
    ]
    return float(np.mean(vals))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_fit(pairs) -> RateFit:
    """Least-squares line through ``(log eta, log distance)``."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
        raise DegenerateInputError("need at least 4 (eta, distance) pairs")
    if np.any(arr <= 0):
        raise DegenerateInputError("step sizes and distances must be positive")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(lx) == 0:
        raise DegenerateInputError("step sizes must not all coincide")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2)
