"""Ergodic averages of the chain and their asymptotic variances.

The time average ``E_n(h) = (1/n) sum_k h(X_k)`` of a bounded ``h`` satisfies a
CLT with variance

    V(h) = <h - mu(h), h - mu(h)> + 2 sum_{k>=1} <P^k h, h - mu(h)>

under the invariant law of the chain. Three estimators are provided: batch
means, truncated autocovariances, and a Monte-Carlo solution of the discrete
Poisson equation ``P f - f = h - mu(h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import stats

from .errors import (
    DepthTooSmallError,
    EmptyAccumulatorError,
    LagTooLargeError,
    TooFewBatchesError,
    ValidationError,
    ZeroVarianceError,
)
from .integrator import EmScheduleConfig, ensemble_run, make_rng, run_chain, stationary_sample
from .model import DiffusionParams

MAX_MOMENT = 8
DEFAULT_BINS = 512
DEFAULT_RESERVOIR = 100_000
DEFAULT_BLOCK = 1000


def histogram_edges(states, n_bins: int = DEFAULT_BINS, width: float = 8.0) -> np.ndarray:
    """Per-column bin edges over ``mean +- width*std`` for coordinates and ``e'x``.

    ``states`` is a pilot sample of shape ``(n, d)``. Returns ``(d + 1, n_bins + 1)``.
    """
    states = np.asarray(states, dtype=float)
    cols = np.column_stack([states, states.sum(axis=1)])
    mu = cols.mean(axis=0)
    sd = cols.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return np.stack([np.linspace(m - width * s, m + width * s, n_bins + 1) for m, s in zip(mu, sd)])


class ErgodicAccumulator:
    """Mergeable running statistics of a stream of states.

    Tracks, for the coordinates and for ``e'x``: power sums up to order 8,
    fixed-edge histograms with under/overflow counts, and the cross-product
    matrix. For each named test function it keeps the running sum and sums
    over consecutive blocks of ``block_len`` states. A uniform reservoir of up
    to ``reservoir_size`` states is maintained with algorithm R.

    Parameters
    ----------
    d : int
        State dimension.
    test_functions : mapping of name to vectorised callable, optional
    edges : array, optional
        Histogram edges from :func:`histogram_edges`. Without them no
        histogram is kept.
    reservoir_size, block_len : int
    seed : int
        Seeds the reservoir sampler.
    """

    def __init__(
        self,
        d: int,
        test_functions: Optional[Mapping[str, Callable]] = None,
        edges=None,
        reservoir_size: int = DEFAULT_RESERVOIR,
        block_len: int = DEFAULT_BLOCK,
        seed: int = 0,
    ):
        self.d = d
        self.test_functions = dict(test_functions or {})
        self.edges = None if edges is None else np.asarray(edges, dtype=float)
        if self.edges is not None and self.edges.shape[0] != d + 1:
            raise ValidationError("histogram edges need one row per coordinate plus one for e'x")
        self.reservoir_size = int(reservoir_size)
        self.block_len = int(block_len)
        self.seed = int(seed)
        self._rng = make_rng(seed)

        self.count = 0
        self.power_sums = np.zeros((MAX_MOMENT, d + 1))
        self.cross = np.zeros((d, d))
        nb = 0 if self.edges is None else self.edges.shape[1] - 1
        self.hist = np.zeros((d + 1, nb), dtype=np.int64)
        self.underflow = np.zeros(d + 1, dtype=np.int64)
        self.overflow = np.zeros(d + 1, dtype=np.int64)
        self.h_sums = {name: 0.0 for name in self.test_functions}
        self.blocks = {name: [] for name in self.test_functions}
        self._partial = {name: 0.0 for name in self.test_functions}
        self._partial_count = 0
        self.dropped = 0  # states in partial blocks discarded at merge
        self.reservoir = np.empty((0, d))

    # -- streaming -----------------------------------------------------

    def push(self, states) -> None:
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[None, :]
        if states.shape[1] != self.d:
            raise ValidationError(f"expected states of dimension {self.d}")
        n = len(states)
        if n == 0:
            return
        cols = np.column_stack([states, states.sum(axis=1)])
        pw = cols.copy()
        for j in range(MAX_MOMENT):
            self.power_sums[j] += pw.sum(axis=0)
            if j + 1 < MAX_MOMENT:
                pw *= cols
        self.cross += states.T @ states
        if self.edges is not None:
            for c in range(self.d + 1):
                e = self.edges[c]
                self.hist[c] += np.histogram(cols[:, c], bins=e)[0]
                self.underflow[c] += int(np.count_nonzero(cols[:, c] < e[0]))
                self.overflow[c] += int(np.count_nonzero(cols[:, c] > e[-1]))
        for name, h in self.test_functions.items():
            vals = np.asarray(h(states), dtype=float)
            self.h_sums[name] += float(vals.sum())
            self._push_blocks(name, vals)
        self._partial_count = (self._partial_count + n) % self.block_len
        self._reservoir_push(states)
        self.count += n

    def _push_blocks(self, name, vals):
        L = self.block_len
        fill = self._partial_count
        head = min(L - fill, len(vals))
        acc = self._partial[name] + float(vals[:head].sum())
        if fill + head < L:
            self._partial[name] = acc
            return
        self.blocks[name].append(acc)
        rest = vals[head:]
        full = len(rest) // L
        if full:
            self.blocks[name].extend(rest[: full * L].reshape(full, L).sum(axis=1).tolist())
        self._partial[name] = float(rest[full * L :].sum())

    def _reservoir_push(self, states):
        M = self.reservoir_size
        if M == 0:
            return
        have = len(self.reservoir)
        if have < M:
            take = min(M - have, len(states))
            self.reservoir = np.vstack([self.reservoir, states[:take]])
            states = states[take:]
            seen = self.count + take
        else:
            seen = self.count
        if len(states) == 0:
            return
        # Algorithm R: item number t (1-based) replaces slot j ~ U{0..t-1} if j < M.
        t = seen + 1 + np.arange(len(states))
        j = self._rng.integers(0, t)
        hit = np.flatnonzero(j < M)
        if hit.size == 0:
            return
        slots = j[hit]
        # later items overwrite earlier ones in the same slot
        rev_slots = slots[::-1]
        uniq, first = np.unique(rev_slots, return_index=True)
        winners = hit[::-1][first]
        self.reservoir[uniq] = states[winners]

    # -- merging -------------------------------------------------------

    def _key(self):
        return (self.seed, self.count, self.reservoir.tobytes())

    def merge(self, other: "ErgodicAccumulator") -> "ErgodicAccumulator":
        """Combine two accumulators into a new one.

        Sums, moments and histograms add. Block sums are concatenated in a
        canonical order and unfinished blocks are dropped, so the result does
        not depend on argument order. The reservoir is resampled: the number
        taken from each side is hypergeometric, which keeps it a uniform
        sample of the combined stream.
        """
        if other.d != self.d or set(other.test_functions) != set(self.test_functions):
            raise ValidationError("accumulators track different quantities")
        if (self.edges is None) != (other.edges is None) or (
            self.edges is not None and not np.array_equal(self.edges, other.edges)
        ):
            raise ValidationError("accumulators use different histogram edges")
        if other.block_len != self.block_len or other.reservoir_size != self.reservoir_size:
            raise ValidationError("accumulators use different block or reservoir sizes")
        a, b = sorted((self, other), key=ErgodicAccumulator._key)
        seed = int(np.random.SeedSequence([a.seed, b.seed, a.count, b.count]).generate_state(1, np.uint64)[0])
        out = ErgodicAccumulator(
            self.d, self.test_functions, self.edges, self.reservoir_size, self.block_len, seed
        )
        out.count = a.count + b.count
        out.power_sums = a.power_sums + b.power_sums
        out.cross = a.cross + b.cross
        out.hist = a.hist + b.hist
        out.underflow = a.underflow + b.underflow
        out.overflow = a.overflow + b.overflow
        out.h_sums = {k: a.h_sums[k] + b.h_sums[k] for k in a.h_sums}
        out.blocks = {k: a.blocks[k] + b.blocks[k] for k in a.blocks}
        out.dropped = a.dropped + b.dropped + a._partial_count + b._partial_count
        out.reservoir = _merge_reservoirs(a, b, out._rng, self.reservoir_size)
        return out

    # -- summaries -----------------------------------------------------

    def _require(self):
        if self.count == 0:
            raise EmptyAccumulatorError("no states recorded")

    def mean(self) -> np.ndarray:
        """Time average of the state (coordinates only)."""
        self._require()
        return self.power_sums[0, : self.d] / self.count

    def moment(self, order: int) -> np.ndarray:
        """Raw moments of order ``1..8`` for each coordinate and, last, for ``e'x``."""
        self._require()
        if not 1 <= order <= MAX_MOMENT:
            raise ValidationError(f"moment order must be in 1..{MAX_MOMENT}")
        return self.power_sums[order - 1] / self.count

    def second_moment_matrix(self) -> np.ndarray:
        self._require()
        return self.cross / self.count

    def h_mean(self, name: str) -> float:
        self._require()
        return self.h_sums[name] / self.count

    def block_means(self, name: str) -> np.ndarray:
        return np.asarray(self.blocks[name]) / self.block_len

    def histogram_mass(self) -> np.ndarray:
        return self.hist.sum(axis=1) + self.underflow + self.overflow

    def snapshot(self) -> dict:
        self._require()
        out = {"count": self.count}
        m1, m2 = self.moment(1), self.moment(2)
        for i in range(self.d):
            out[f"mean_x{i}"] = float(m1[i])
        out["mean_sum"] = float(m1[self.d])
        for i in range(self.d):
            out[f"m2_x{i}"] = float(m2[i])
        out["m2_sum"] = float(m2[self.d])
        for name in self.h_sums:
            out[f"h_{name}"] = self.h_mean(name)
        return out


def _merge_reservoirs(a, b, rng, M):
    m = min(M, a.count + b.count)
    if m == len(a.reservoir) + len(b.reservoir):
        return np.vstack([a.reservoir, b.reservoir])
    if a.count == 0:
        k = 0
    elif b.count == 0:
        k = m
    else:
        k = int(rng.hypergeometric(a.count, b.count, m))
    ia = rng.choice(len(a.reservoir), size=k, replace=False)
    ib = rng.choice(len(b.reservoir), size=m - k, replace=False)
    return np.vstack([a.reservoir[np.sort(ia)], b.reservoir[np.sort(ib)]])


def empirical_mean(acc: ErgodicAccumulator, h) -> float:
    """Time average of ``h`` over the recorded states.

    ``h`` is the name of a tracked test function, or a callable evaluated on
    the stored states (only allowed while the reservoir still holds every
    state).
    """
    acc._require()
    if isinstance(h, str):
        return acc.h_mean(h)
    if len(acc.reservoir) != acc.count:
        raise ValidationError("callable h needs every state; register it as a tracked test function")
    vals = np.asarray(h(acc.reservoir), dtype=float)
    # shifted sum keeps constant functions exact
    return float(vals[0] + np.mean(vals - vals[0]))


@dataclass
class VarianceEstimate:
    """Estimate of the asymptotic variance ``lim n Var(E_n(h))``."""

    estimate: float
    stderr: float
    method: str
    metadata: dict = field(default_factory=dict)
    standardized: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.estimate < 0:
            self.estimate = 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "estimate": self.estimate, "stderr": self.stderr, **self.metadata}


def variance_batch_means(values, n_batches: int) -> VarianceEstimate:
    """Batch-means estimate ``L * Var(batch means)`` with batch length ``L = n // B``.

    The leading ``n mod B`` values are dropped. The standardised batch means
    (centred and scaled by their sample standard deviation) are returned for
    normality checks.
    """
    values = np.asarray(values, dtype=float).ravel()
    n = len(values)
    if n_batches < 8 or n < n_batches:
        raise TooFewBatchesError(f"need n >= B >= 8, got n={n}, B={n_batches}")
    L = n // n_batches
    used = values[n - L * n_batches :]
    means = used.reshape(n_batches, L).mean(axis=1)
    var_m = float(np.var(means, ddof=1))
    est = L * var_m
    sd = math.sqrt(var_m)
    z = (means - means.mean()) / sd if sd > 0 else np.zeros_like(means)
    return VarianceEstimate(
        estimate=est,
        stderr=est * math.sqrt(2.0 / (n_batches - 1)),
        method="batch-means",
        metadata={"n_batches": n_batches, "batch_len": L, "dropped": n - L * n_batches},
        standardized=z,
    )


def batch_means_from_blocks(acc: ErgodicAccumulator, name: str, n_batches: int) -> VarianceEstimate:
    """Batch means built from an accumulator's block sums (adjacent blocks grouped)."""
    bm = acc.block_means(name)
    nb = len(bm)
    if n_batches < 8 or nb < n_batches:
        raise TooFewBatchesError(f"only {nb} blocks recorded, need B={n_batches} >= 8")
    per = nb // n_batches
    grouped = bm[nb - per * n_batches :].reshape(n_batches, per).mean(axis=1)
    L = per * acc.block_len
    var_m = float(np.var(grouped, ddof=1))
    sd = math.sqrt(var_m)
    z = (grouped - grouped.mean()) / sd if sd > 0 else np.zeros_like(grouped)
    est = L * var_m
    return VarianceEstimate(
        estimate=est,
        stderr=est * math.sqrt(2.0 / (n_batches - 1)),
        method="batch-means",
        metadata={"n_batches": n_batches, "batch_len": L},
        standardized=z,
    )


def autocovariances(values, max_lag: int) -> np.ndarray:
    """Biased (divide-by-n) autocovariances at lags ``0..max_lag`` via FFT."""
    y = np.asarray(values, dtype=float).ravel()
    n = len(y)
    y = y - y.mean()
    size = 1 << (2 * n - 1).bit_length()
    fy = np.fft.rfft(y, size)
    acov = np.fft.irfft(fy * np.conj(fy), size)[: max_lag + 1] / n
    return acov


def variance_autocovariance(values, max_lag: Optional[int] = None) -> VarianceEstimate:
    """``c_0 + 2 sum_{k=1}^{K*} c_k`` with ``K*`` from the initial positive sequence.

    Pairs ``c_{2m} + c_{2m+1}`` are summed until the first negative pair or
    until ``max_lag`` (default ``n // 20``) is reached.
    """
    values = np.asarray(values, dtype=float).ravel()
    n = len(values)
    if max_lag is None:
        max_lag = max(1, n // 20)
    if not 1 <= max_lag < n / 10:
        raise LagTooLargeError(f"max_lag must satisfy 1 <= K < n/10 (n={n}, K={max_lag})")
    c = autocovariances(values, max_lag)
    npairs = (max_lag + 1) // 2
    pairs = c[0 : 2 * npairs : 2] + c[1 : 2 * npairs : 2]
    neg = np.flatnonzero(pairs < 0)
    m = int(neg[0]) if neg.size else len(pairs)
    truncated = not neg.size
    k_star = max(2 * m - 1, 0)
    est = float(c[0] + 2.0 * c[1 : k_star + 1].sum())
    return VarianceEstimate(
        estimate=est,
        stderr=abs(est) * math.sqrt(2.0 * (2 * k_star + 1) / n),
        method="autocovariance",
        metadata={"max_lag": max_lag, "lag": k_star, "c0": float(c[0]), "hit_max_lag": truncated},
    )


def fit_decay_rate(values, eta: float, max_lag: Optional[int] = None, floor: float = 0.05) -> float:
    """Exponential decay rate (per unit time) of the autocorrelation of ``values``.

    Least-squares fit of ``log rho_k = -c k eta`` over lags with ``rho_k > floor``.
    """
    values = np.asarray(values, dtype=float).ravel()
    if max_lag is None:
        max_lag = max(2, len(values) // 20)
    c = autocovariances(values, max_lag)
    if c[0] <= 0:
        raise ZeroVarianceError("constant stream has no decay rate")
    rho = c / c[0]
    below = np.flatnonzero(rho <= floor)
    stop = int(below[0]) if below.size else len(rho)
    lags = np.arange(1, max(stop, 2))
    t = lags * eta
    return float(-np.sum(t * np.log(np.maximum(rho[lags], 1e-300))) / np.sum(t * t))


def continuous_time_variance(est: VarianceEstimate, eta: float) -> VarianceEstimate:
    """Rescale a per-step chain variance to the diffusion's time-average variance.

    ``sqrt(T) (E_T - mu)`` with ``T = n eta`` has variance ``eta`` times the
    per-step one.
    """
    return VarianceEstimate(
        estimate=est.estimate * eta,
        stderr=est.stderr * eta,
        method=est.method,
        metadata={**est.metadata, "time_scaled": True, "eta": eta},
    )


@dataclass
class SteinSolution:
    """Monte-Carlo solution of ``P f - f = h - mu`` at query points.

    ``pf`` estimates ``P f`` with chains independent of those behind ``f``;
    ``residual = (pf - f) - (h(x) - mu)`` should vanish within ``residual_se``.
    """

    points: np.ndarray
    f: np.ndarray
    f_se: np.ndarray
    pf: np.ndarray
    pf_se: np.ndarray
    h_centered: np.ndarray
    depth: int
    mu: float

    @property
    def residual(self) -> np.ndarray:
        return (self.pf - self.f) - self.h_centered

    @property
    def residual_se(self) -> np.ndarray:
        return np.hypot(self.f_se, self.pf_se)


def default_depth(eta: float, rate: float) -> int:
    return math.ceil(10.0 / (rate * eta))


def stein_series_solve(
    params: DiffusionParams,
    cfg: EmScheduleConfig,
    h: Callable,
    mu_hat: float,
    query_points,
    depth: Optional[int] = None,
    n_inner: int = 100,
    rate: float = 1.0,
    tail_const: float = 1.0,
    h_bound: float = 1.0,
    tol: Optional[float] = None,
) -> SteinSolution:
    """Truncated series ``f(x) = -sum_{k=0}^{K} (P^k h(x) - mu)``.

    Each ``P^k h(x)`` is averaged over ``n_inner`` chains started at ``x``;
    since one chain visits every ``k``, a chain contributes
    ``-sum_{k<=K} (h(X_k) - mu)``. A second, independent set of chains gives
    ``P f(x) = -sum_{k=1}^{K+1} (P^k h(x) - mu)``.

    ``depth`` defaults to ``ceil(10 / (rate * eta))``. With ``tol`` set, the
    geometric tail bound ``tail_const * 2 h_bound * exp(-rate (K+1) eta) /
    (1 - exp(-rate eta))`` must not exceed it (:class:`DepthTooSmallError`).
    The chain's step size and seed come from ``cfg``.
    """
    eta = cfg.eta
    if depth is None:
        depth = default_depth(eta, rate)
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    if tol is not None:
        tail = tail_const * 2.0 * h_bound * math.exp(-rate * (depth + 1) * eta) / (-math.expm1(-rate * eta))
        if tail > tol:
            raise DepthTooSmallError(f"series tail bound {tail:.3e} exceeds tolerance {tol:.3e} at depth {depth}")
    pts = np.array(query_points, dtype=float, ndmin=2)
    m, d = pts.shape
    starts = np.repeat(pts, 2 * n_inner, axis=0)
    # rows [i*2n, i*2n+n) feed f(x_i); the next n rows feed P f(x_i)
    h0 = np.asarray(h(pts), dtype=float) - mu_hat
    tot = np.zeros(len(starts))
    last = np.zeros(len(starts))

    def observe(k, x, _db):
        hv = np.asarray(h(x), dtype=float) - mu_hat
        tot[:] += hv
        if k == 0:
            last[:] = hv

    final = ensemble_run(params, starts, eta, depth + 1, cfg.seed, observer=observe)
    h_end = np.asarray(h(final), dtype=float) - mu_hat
    # observe saw X_0..X_K; shift for the P f chains to cover X_1..X_{K+1}
    role = np.tile(np.r_[np.zeros(n_inner, bool), np.ones(n_inner, bool)], m)
    series = np.where(role, tot - last + h_end, tot)
    series = -series.reshape(m, 2, n_inner)
    f = series[:, 0].mean(axis=1)
    pf = series[:, 1].mean(axis=1)
    ddof = 1 if n_inner > 1 else 0
    f_se = series[:, 0].std(axis=1, ddof=ddof) / math.sqrt(n_inner)
    pf_se = series[:, 1].std(axis=1, ddof=ddof) / math.sqrt(n_inner)
    return SteinSolution(pts, f, f_se, pf, pf_se, h0, depth, mu_hat)


def variance_stein_series(
    params: DiffusionParams,
    cfg: EmScheduleConfig,
    h: Callable,
    mu_hat: float,
    stationary_points,
    depth: Optional[int] = None,
    rate: float = 1.0,
    n_inner: int = 1,
) -> VarianceEstimate:
    """``<f, f> - <P f, P f>`` over stationary points, using ``P f = f + h - mu``.

    ``f`` is the truncated series of :func:`stein_series_solve`; the identity
    for ``P f`` is the Poisson equation itself, so each point contributes
    ``-2 (h - mu) f - (h - mu)^2``. The residual of the independently
    estimated ``P f`` is reported as a consistency check.
    """
    sol = stein_series_solve(params, cfg, h, mu_hat, stationary_points, depth=depth, n_inner=n_inner, rate=rate)
    dh = sol.h_centered
    terms = sol.f**2 - (sol.f + dh) ** 2
    m = len(terms)
    z = np.abs(sol.residual) / np.maximum(sol.residual_se, 1e-300)
    return VarianceEstimate(
        estimate=float(terms.mean()),
        stderr=float(terms.std(ddof=1) / math.sqrt(m)) if m > 1 else float("inf"),
        method="stein-series",
        metadata={
            "depth": sol.depth,
            "n_points": m,
            "n_inner": n_inner,
            "residual_within_3se": float(np.mean(z < 3.0)) if n_inner > 1 else None,
        },
    )


def mdp_rate(z, var: VarianceEstimate):
    """Moderate-deviation rate ``z^2 / (2 V)``."""
    if not var.estimate > 0:
        raise ZeroVarianceError("rate function needs a positive variance")
    z = np.asarray(z, dtype=float)
    out = z * z / (2.0 * var.estimate)
    return out if out.ndim else float(out)


@dataclass
class NormalityReport:
    statistic: float
    pvalue: float
    n: int

    def passed(self, level: float = 0.01) -> bool:
        return self.pvalue > level


def clt_normality_check(standardized) -> NormalityReport:
    """Kolmogorov-Smirnov test of standardised batch means against N(0, 1)."""
    z = np.asarray(standardized, dtype=float).ravel()
    if len(z) < 32:
        raise TooFewBatchesError(f"need at least 32 batch means, got {len(z)}")
    res = stats.kstest(z, "norm")
    return NormalityReport(float(res.statistic), float(res.pvalue), len(z))


VARIANCE_METHODS = ("batch-means", "autocovariance", "stein-series")


@dataclass
class VarianceReport:
    """Per-step variance estimates of ``h`` along one chain plus fitted context."""

    mu_hat: float
    rate: float
    eta: float
    n_steps: int
    estimates: dict

    def to_dict(self) -> dict:
        return {
            "mu_hat": self.mu_hat,
            "decay_rate": self.rate,
            "eta": self.eta,
            "n_steps": self.n_steps,
            "per_step": {k: v.to_dict() for k, v in self.estimates.items()},
            "continuous_time": {k: continuous_time_variance(v, self.eta).to_dict() for k, v in self.estimates.items()},
        }


def estimate_variances(
    params: DiffusionParams,
    h: Callable,
    eta: float,
    n_steps: int,
    burn_in: Optional[int] = None,
    seed: int = 0,
    methods=VARIANCE_METHODS,
    n_batches: int = 1000,
    max_lag: Optional[int] = None,
    stein_points: int = 40000,
    stein_depth: Optional[int] = None,
    rate: Optional[float] = None,
) -> VarianceReport:
    """Run one chain from the origin and estimate ``V(h)`` by each method.

    Seeds: the chain uses ``seed``, stationary starting points for the
    series estimator ``seed + 1``, and its inner chains ``seed + 2``. The
    decay rate used for burn-in and series depth is fitted from the chain
    unless given.
    """
    unknown = set(methods) - set(VARIANCE_METHODS)
    if unknown:
        raise ValidationError(f"unknown variance methods {sorted(unknown)}")
    if burn_in is None:
        burn_in = min(n_steps // 10, math.ceil(20.0 / eta))
    cfg = EmScheduleConfig(eta=eta, n_steps=n_steps, x0=np.zeros(params.d), burn_in=burn_in, seed=seed)
    traj = run_chain(params, cfg, record=True)
    vals = np.asarray(h(traj.states), dtype=float)
    del traj
    mu = float(vals.mean())
    if rate is None:
        rate = fit_decay_rate(vals, eta, max_lag=min(len(vals) // 20, math.ceil(20.0 / eta)))
    out = {}
    if "batch-means" in methods:
        out["batch-means"] = variance_batch_means(vals, n_batches)
    if "autocovariance" in methods:
        lag = max_lag if max_lag is not None else min(len(vals) // 20, math.ceil(50.0 / (rate * eta)))
        out["autocovariance"] = variance_autocovariance(vals, lag)
    if "stein-series" in methods:
        pts = stationary_sample(params, eta, stein_points, horizon=20.0 / rate, seed=seed + 1)
        inner = EmScheduleConfig(eta=eta, n_steps=0, x0=np.zeros(params.d), seed=seed + 2)
        out["stein-series"] = variance_stein_series(params, inner, h, mu, pts, depth=stein_depth, rate=rate)
    return VarianceReport(mu_hat=mu, rate=float(rate), eta=eta, n_steps=n_steps, estimates=out)
