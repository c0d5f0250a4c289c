"""Step-size sweep against the exact one-dimensional stationary law.

For each ``eta`` the chain runs for a fixed total time ``horizon`` (so the
step budget grows like ``1/eta``), split over independent replicas. States
are thinned to one per ``thin_time`` time units, pooled, and compared with
the analytic law in W1. Error bars are leave-one-replica-out jackknife
standard errors of the pooled distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .integrator import EmScheduleConfig, run_replicas
from .metrics import Benchmark1D, RateFit, analytic_density_1d, rate_fit, w1_sorted_1d
from .model import derive_params, exponential_service_model


class ThinnedSink:
    """Keeps every ``every``-th pushed state (by global position in the stream)."""

    def __init__(self, every: int):
        if every < 1:
            raise ValidationError("thinning interval must be >= 1")
        self.every = int(every)
        self.seen = 0
        self.parts = []

    def push(self, states):
        states = np.asarray(states)
        first = (-self.seen) % self.every
        self.parts.append(states[first :: self.every].copy())
        self.seen += len(states)

    def merge(self, other: "ThinnedSink") -> "ThinnedSink":
        out = ThinnedSink(self.every)
        out.parts = [self.states, other.states]
        out.seen = self.seen + other.seen
        return out

    @property
    def states(self) -> np.ndarray:
        if not self.parts:
            return np.empty((0, 1))
        return np.concatenate(self.parts)


@dataclass(frozen=True)
class SweepRow:
    eta: float
    w1: float
    stderr: float
    n_samples: int
    steps_per_replica: int
    burn_in: int


def pooled_w1(samples, bench: Benchmark1D):
    """W1 of the pooled replicas and its jackknife standard error over replicas."""
    pooled = np.concatenate(samples)[:, 0]
    w = w1_sorted_1d(pooled, bench)
    r = len(samples)
    if r < 2:
        return w, float("nan")
    loo = np.array([w1_sorted_1d(np.concatenate(samples[:i] + samples[i + 1 :])[:, 0], bench) for i in range(r)])
    se = math.sqrt((r - 1) / r * float(np.sum((loo - loo.mean()) ** 2)))
    return w, se


def benchmark_1d_sweep(
    beta: float,
    alpha: float,
    etas,
    ca2: float = 1.0,
    horizon: float = 2.0e6,
    n_replicas: int = 8,
    seed: int = 7,
    thin_time: float = 1.0,
    burn_time: float = 20.0,
    threads: int = 1,
    steps_per_eta=None,
):
    """Run the sweep; returns ``(rows, bench, fit)``.

    ``steps_per_eta`` (an int) overrides ``horizon`` with a fixed total step
    count per ``eta``. Replica ``i`` at sweep position ``j`` uses seed
    ``seed + j * n_replicas + i``.
    """
    etas = [float(e) for e in etas]
    if len(etas) < 1 or any(not 0 < e < 1 for e in etas):
        raise ValidationError("step sizes must lie in (0, 1)")
    if n_replicas < 1:
        raise ValidationError("need at least one replica")
    params = derive_params(exponential_service_model(alpha, beta, ca2))
    bench = analytic_density_1d(beta, alpha, float(params.Sigma[0, 0]))
    rows = []
    for j, eta in enumerate(etas):
        total = int(steps_per_eta) if steps_per_eta is not None else math.ceil(horizon / eta)
        per = math.ceil(total / n_replicas)
        burn = math.ceil(burn_time / eta)
        every = max(1, round(thin_time / eta))
        cfg = EmScheduleConfig(eta=eta, n_steps=per + burn, x0=[0.0], burn_in=burn, seed=seed + j * n_replicas)
        sinks = []

        def factory(i, sinks=sinks, every=every):
            s = ThinnedSink(every)
            sinks.append((i, s))
            return s

        run_replicas(params, cfg, n_replicas, factory, threads=threads)
        samples = [s.states for _, s in sorted(sinks, key=lambda t: t[0])]
        w, se = pooled_w1(samples, bench)
        rows.append(SweepRow(eta, w, se, sum(len(s) for s in samples), per + burn, burn))
    fit = rate_fit([(r.eta, r.w1) for r in rows]) if len(rows) >= 4 else None
    return rows, bench, fit


def monotone_within_errors(rows, k: float = 2.0) -> bool:
    """``W1`` non-increasing as ``eta`` shrinks, up to ``k`` combined standard errors."""
    ordered = sorted(rows, key=lambda r: -r.eta)
    for a, b in zip(ordered, ordered[1:]):
        if b.w1 > a.w1 + k * math.hypot(a.stderr, b.stderr):
            return False
    return True


__all__ = ["ThinnedSink", "SweepRow", "benchmark_1d_sweep", "monotone_within_errors", "pooled_w1", "RateFit"]
