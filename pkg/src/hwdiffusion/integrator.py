"""Euler-Maruyama chain for the limiting diffusion.

The chain is

    X_{k+1} = X_k + g(X_k) eta + sqrt(eta) sigma xi_{k+1}

with i.i.d. standard Gaussian ``xi``. Noise comes from numpy's PCG64 seeded
through ``SeedSequence``; replica ``i`` of a run with seed ``s`` uses seed
``s + i``. The sequential loop is compiled with numba.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import BadDeltaError, BadVarsigmaError, NonFiniteError, ValidationError
from .model import DiffusionParams, drift

CHUNK = 1 << 15
DEFAULT_SAFETY = 10.0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def plan_schedule(delta: float, varsigma: float, safety: float = DEFAULT_SAFETY):
    """Step size and step count reaching Wasserstein accuracy ``delta``.

    Returns ``(eta, n_steps)`` with ``eta = delta**(2/(1-varsigma))`` and
    ``n_steps = ceil(safety * delta**(2/(varsigma-1)) * |ln delta|)``. The
    ``safety`` factor stands in for the unknown constant of the ``O(.)``.
    """
    if not 0.0 < delta < 1.0:
        raise BadDeltaError(f"delta must lie in (0, 1), got {delta!r}")
    if not 0.0 < varsigma < 1.0:
        raise BadVarsigmaError(f"varsigma must lie in (0, 1), got {varsigma!r}")
    if not safety >= 1.0:
        raise ValidationError(f"safety factor must be >= 1, got {safety!r}")
    eta = delta ** (2.0 / (1.0 - varsigma))
    n_steps = math.ceil(safety * delta ** (2.0 / (varsigma - 1.0)) * abs(math.log(delta)))
    return eta, n_steps


def default_burn_in(n_steps: int, eta: float, c1: Optional[float] = None) -> int:
    """``min(N/10, 10/(c1 eta))``, or ``N/10`` without a drift rate."""
    tenth = n_steps // 10
    if c1 is None or c1 <= 0:
        return tenth
    return min(tenth, math.ceil(10.0 / (c1 * eta)))


@dataclass(frozen=True)
class EmScheduleConfig:
    eta: float
    n_steps: int
    x0: np.ndarray
    burn_in: int = 0
    seed: int = 0
    varsigma: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.array(self.x0, dtype=float, ndmin=1))
        if not 0.0 < self.eta < 1.0:
            raise ValidationError(f"step size must lie in (0, 1), got {self.eta!r}")
        if self.n_steps < 0 or self.burn_in < 0:
            raise ValidationError("step counts must be non-negative")
        if self.n_steps > 0 and self.burn_in >= self.n_steps:
            raise ValidationError(f"burn_in ({self.burn_in}) must be < n_steps ({self.n_steps})")
        if self.n_steps == 0 and self.burn_in != 0:
            raise ValidationError("burn_in must be 0 for an empty run")
        if self.varsigma is not None and not 0.0 < self.varsigma < 1.0:
            raise BadVarsigmaError(f"varsigma must lie in (0, 1), got {self.varsigma!r}")
        if self.delta is not None and not self.delta > 0:
            raise BadDeltaError(f"delta must be > 0, got {self.delta!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if not np.all(np.isfinite(self.x0)):
            raise ValidationError("initial state must be finite")

    @classmethod
    def from_schedule(cls, delta, varsigma, x0, safety=DEFAULT_SAFETY, seed=0, burn_in=None, c1=None):
        eta, n = plan_schedule(delta, varsigma, safety)
        if burn_in is None:
            burn_in = default_burn_in(n, eta, c1)
        return cls(eta=eta, n_steps=n, x0=x0, burn_in=burn_in, seed=seed, varsigma=varsigma, delta=delta)

    @property
    def n_recorded(self) -> int:
        return self.n_steps - self.burn_in


@dataclass
class Trajectory:
    """Result of :func:`run_chain`.

    ``states`` holds the post-burn-in states when recording was requested,
    otherwise ``None``. ``final`` is the last state (``x0`` for an empty run).
    """

    eta: float
    seed: int
    x0: np.ndarray
    final: np.ndarray
    n_steps: int
    n_recorded: int
    states: Optional[np.ndarray] = field(default=None, repr=False)


def em_step(params: DiffusionParams, x, eta: float, xi) -> np.ndarray:
    """One Euler-Maruyama step with caller-supplied standard normal ``xi``.

    Broadcasts over leading axes of ``x`` and ``xi``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    out = x + drift(params, x) * eta + math.sqrt(eta) * (xi @ params.sigma.T)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("Euler-Maruyama step produced a non-finite state")
    return out


def _check_dim(params, cfg):
    if cfg.x0.shape != (params.d,):
        raise ValidationError(f"initial state has shape {cfg.x0.shape}, model dimension is {params.d}")


def run_chain(
    params: DiffusionParams,
    cfg: EmScheduleConfig,
    sink=None,
    record: bool = False,
    checkpoint: Optional[int] = None,
    on_checkpoint: Optional[Callable[[int, object], None]] = None,
) -> Trajectory:
    """Iterate the chain ``cfg.n_steps`` times from ``cfg.x0``.

    States after step ``cfg.burn_in`` are passed in chunks to ``sink.push``.
    With ``checkpoint`` set, ``on_checkpoint(step, sink)`` runs every
    ``checkpoint`` steps and once at the end. Output is a deterministic
    function of ``(params, cfg)``.
    """
    _check_dim(params, cfg)
    d = params.d
    rng = make_rng(cfg.seed)
    x = cfg.x0.copy()
    const = np.ascontiguousarray(params.drift_constant)
    lin = np.ascontiguousarray(params.drift_linear)
    kink = np.ascontiguousarray(params.drift_kink)
    scaled_sigma = np.ascontiguousarray(math.sqrt(cfg.eta) * params.sigma)
    kept = np.empty((cfg.n_recorded, d)) if record and cfg.n_steps else None
    buf = np.empty((CHUNK, d))

    step = 0
    while step < cfg.n_steps:
        c = min(CHUNK, cfg.n_steps - step)
        if checkpoint:
            c = min(c, checkpoint - step % checkpoint)
        xi = rng.standard_normal((c, d))
        out = buf[:c]
        bad = _kernels.em_chunk(x, const, lin, kink, scaled_sigma, cfg.eta, xi, out)
        if bad >= 0:
            raise NonFiniteError("chain state left the finite range", step + bad + 1)
        lo = max(cfg.burn_in - step, 0)
        if lo < c:
            post = out[lo:]
            if sink is not None:
                sink.push(post)
            if kept is not None:
                start = step + lo - cfg.burn_in
                kept[start : start + len(post)] = post
        step += c
        if checkpoint and on_checkpoint is not None and (step % checkpoint == 0 or step == cfg.n_steps):
            on_checkpoint(step, sink)

    return Trajectory(
        eta=cfg.eta,
        seed=cfg.seed,
        x0=cfg.x0.copy(),
        final=x,
        n_steps=cfg.n_steps,
        n_recorded=cfg.n_recorded,
        states=kept,
    )


@dataclass
class ReplicaRun:
    accumulator: object
    trajectories: list


def run_replicas(
    params: DiffusionParams,
    cfg: EmScheduleConfig,
    n_replicas: int,
    sink_factory: Callable[[int], object],
    threads: int = 1,
) -> ReplicaRun:
    """Run independent chains with seeds ``cfg.seed + i`` and merge their sinks.

    ``sink_factory(i)`` builds the sink of replica ``i``; sinks must provide
    ``merge``. Merging happens after all replicas finish and always in
    replica order, so the result does not depend on scheduling.
    """
    if n_replicas < 1:
        raise ValidationError("need at least one replica")

    def one(i):
        sink = sink_factory(i)
        traj = run_chain(params, replace(cfg, seed=cfg.seed + i), sink)
        return sink, traj

    if threads > 1 and n_replicas > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n_replicas)) as pool:
            results = list(pool.map(one, range(n_replicas)))
    else:
        results = [one(i) for i in range(n_replicas)]
    merged = results[0][0]
    for sink, _ in results[1:]:
        merged = merged.merge(sink)
    return ReplicaRun(accumulator=merged, trajectories=[t for _, t in results])


def ensemble_run(
    params: DiffusionParams,
    x0,
    eta: float,
    n_steps: int,
    seed: int,
    drift_fn: Optional[Callable] = None,
    observer: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
) -> np.ndarray:
    """Advance a batch of independent chains in lockstep.

    ``x0`` has shape ``(n_chains, d)``. ``drift_fn`` replaces the exact drift
    (e.g. a mollified one). ``observer(k, x_k, dB_k)`` sees the state at the
    start of step ``k`` and the Brownian increment ``sqrt(eta) xi`` driving
    it. Returns the final states.
    """
    x = np.array(x0, dtype=float, ndmin=2)
    n, d = x.shape
    if d != params.d:
        raise ValidationError(f"states have dimension {d}, model dimension is {params.d}")
    g = drift_fn if drift_fn is not None else (lambda y: drift(params, y))
    rng = make_rng(seed)
    sq = math.sqrt(eta)
    sT = params.sigma.T
    for k in range(n_steps):
        db = sq * rng.standard_normal((n, d))
        if observer is not None:
            observer(k, x, db)
        x = x + g(x) * eta + db @ sT
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("ensemble state left the finite range")
    return x


def stationary_sample(params: DiffusionParams, eta: float, n: int, horizon: float, seed: int, x0=None) -> np.ndarray:
    """Final states of ``n`` independent chains run for time ``horizon``.

    Approximates i.i.d. draws from the chain's invariant law once ``horizon``
    exceeds a few relaxation times.
    """
    start = np.zeros((n, params.d)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (n, params.d))
    return ensemble_run(params, start, eta, math.ceil(horizon / eta), seed)
