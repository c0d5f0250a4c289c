"""Phase-type queue primitives and the coefficients of the limiting diffusion.

The many-server queue with phase-type service in the Halfin-Whitt regime has a
diffusion limit

.. math:: dX_t = g(X_t)\\,dt + \\sigma\\,dB_t,
          \\qquad g(x) = -\\beta p - R x + (R - \\alpha I) p\\,(e'x)^+

with :math:`R = (I - P')\\operatorname{diag}(v)`. This module validates the queue
primitives and builds :math:`R`, :math:`\\zeta`, :math:`\\gamma` and the noise
covariance :math:`\\sigma\\sigma'`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ModelValidationError,
    NonEllipticCovarianceError,
    NonUnitMeanPhaseError,
    SingularRoutingError,
)

ZETA_TOL = 1e-9
COND_MAX = 1e12
ELLIPTIC_REL_TOL = 1e-10
_PROB_TOL = 1e-12


@dataclass(frozen=True)
class PhaseTypeModel:
    """Raw queue primitives.

    Parameters
    ----------
    P : (d, d) array
        Sub-stochastic routing matrix between service phases, zero diagonal.
    v : (d,) array
        Service rate in each phase.
    p : (d,) array
        Initial-phase distribution.
    alpha : float
        Patience (abandonment) rate, ``alpha > 0``.
    beta : float
        Slack of the arrival rate relative to critical loading; any sign.
    ca2 : float
        Arrival variability (squared coefficient of variation for renewal input).
    """

    P: np.ndarray
    v: np.ndarray
    p: np.ndarray
    alpha: float
    beta: float
    ca2: float = 1.0

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        v = np.array(self.v, dtype=float, ndmin=1)
        p = np.array(self.p, dtype=float, ndmin=1)
        for arr in (P, v, p):
            arr.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "ca2", float(self.ca2))
        self._validate()

    @property
    def d(self) -> int:
        return self.v.shape[0]

    def _validate(self):
        d = self.v.shape[0]
        if d < 1 or self.v.ndim != 1:
            raise ModelValidationError("must be a non-empty vector", "$.v")
        if self.P.shape != (d, d):
            raise ModelValidationError(f"expected shape ({d}, {d}), got {self.P.shape}", "$.P")
        if self.p.shape != (d,):
            raise ModelValidationError(f"expected length {d}, got {self.p.shape}", "$.p")
        for name, arr in (("P", self.P), ("v", self.v), ("p", self.p)):
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                raise ModelValidationError("not finite", _path(name, bad[0]))
        for i in range(d):
            if abs(self.P[i, i]) > _PROB_TOL:
                raise ModelValidationError("diagonal of P must be zero", f"$.P[{i}][{i}]")
        neg = np.argwhere(self.P < 0)
        if neg.size:
            raise ModelValidationError("routing probabilities must be >= 0", _path("P", neg[0]))
        rows = self.P.sum(axis=1)
        over = np.flatnonzero(rows > 1 + _PROB_TOL)
        if over.size:
            raise ModelValidationError(
                f"row sum {rows[over[0]]!r} exceeds 1 (P must be sub-stochastic)",
                f"$.P[{over[0]}]",
            )
        nonpos = np.flatnonzero(self.v <= 0)
        if nonpos.size:
            raise ModelValidationError("service rates must be > 0", f"$.v[{nonpos[0]}]")
        negp = np.flatnonzero(self.p < 0)
        if negp.size:
            raise ModelValidationError("probabilities must be >= 0", f"$.p[{negp[0]}]")
        if abs(self.p.sum() - 1.0) > 1e-9:
            raise ModelValidationError(f"must sum to 1, sums to {self.p.sum()!r}", "$.p")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ModelValidationError("patience rate must be a finite positive number", "$.alpha")
        if not math.isfinite(self.beta):
            raise ModelValidationError("must be finite", "$.beta")
        if not (self.ca2 > 0 and math.isfinite(self.ca2)):
            raise ModelValidationError("arrival variability must be a finite positive number", "$.ca2")
        cond = np.linalg.cond(np.eye(d) - self.P)
        if not cond < COND_MAX:
            raise SingularRoutingError(f"I - P is numerically singular (condition number {cond:.3e})", "$.P")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "P": self.P.tolist(),
            "v": self.v.tolist(),
            "p": self.p.tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
            "ca2": self.ca2,
        }

    @classmethod
    def from_dict(cls, doc) -> "PhaseTypeModel":
        """Build a model from a decoded JSON document, reporting JSON paths on failure."""
        if not isinstance(doc, dict):
            raise ModelValidationError("model document must be a JSON object", "$")
        missing = [k for k in ("d", "P", "v", "p", "alpha", "beta", "ca2") if k not in doc]
        if missing:
            raise ModelValidationError(f"missing key {missing[0]!r}", f"$.{missing[0]}")
        d = doc["d"]
        if isinstance(d, bool) or not isinstance(d, int) or d < 1:
            raise ModelValidationError("must be a positive integer", "$.d")
        P = _matrix(doc["P"], d, "$.P")
        v = _vector(doc["v"], d, "$.v")
        p = _vector(doc["p"], d, "$.p")
        scalars = {}
        for key in ("alpha", "beta", "ca2"):
            val = doc[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ModelValidationError("must be a number", f"$.{key}")
            scalars[key] = float(val)
        return cls(P=P, v=v, p=p, **scalars)


def _path(name, idx):
    return f"$.{name}" + "".join(f"[{int(i)}]" for i in idx)


def _vector(val, d, path):
    if not isinstance(val, list):
        raise ModelValidationError("must be an array", path)
    if len(val) != d:
        raise ModelValidationError(f"expected {d} entries, got {len(val)}", path)
    for i, x in enumerate(val):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ModelValidationError("must be a number", f"{path}[{i}]")
    return np.asarray(val, dtype=float)


def _matrix(val, d, path):
    if not isinstance(val, list):
        raise ModelValidationError("must be an array of rows", path)
    if len(val) != d:
        raise ModelValidationError(f"expected {d} rows, got {len(val)}", path)
    return np.vstack([_vector(row, d, f"{path}[{i}]") for i, row in enumerate(val)])


def load_model(path) -> PhaseTypeModel:
    """Read a model JSON file (keys ``d, P, v, p, alpha, beta, ca2``; row-major matrices)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelValidationError(f"cannot read model file {str(path)!r}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})", "$") from exc
    return PhaseTypeModel.from_dict(doc)


@dataclass(frozen=True)
class DiffusionParams:
    """Coefficients of the limiting diffusion derived from a :class:`PhaseTypeModel`.

    ``model`` is the model the coefficients were computed from; after
    normalisation its service rates differ from the user's input.
    """

    model: PhaseTypeModel
    R: np.ndarray
    zeta: float
    gamma: np.ndarray
    Sigma: np.ndarray
    sigma: np.ndarray
    drift_constant: np.ndarray
    drift_linear: np.ndarray
    drift_kink: np.ndarray
    min_eig: float
    H: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.R.shape[0]

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def beta(self) -> float:
        return self.model.beta

    @property
    def p(self) -> np.ndarray:
        return self.model.p

    @property
    def sigma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.sigma)

    def summary(self) -> dict:
        return {
            "d": self.d,
            "zeta": float(self.zeta),
            "e_gamma": float(self.gamma.sum()),
            "min_eig": float(self.min_eig),
            "c_op": operator_constant(self),
            "c_op_tilde": linear_growth_bound(self),
        }


def _h_matrix(q):
    """``diag(q) - q q'``: zero row sums when ``sum(q) == 1``."""
    return np.diag(q) - np.outer(q, q)


def _raw_params(m: PhaseTypeModel):
    d = m.d
    eye = np.eye(d)
    R = (eye - m.P.T) @ np.diag(m.v)
    w = np.linalg.solve(R, m.p)
    zeta = 1.0 / w.sum()
    return R, zeta, zeta * w


def phase_zeta(m: PhaseTypeModel) -> float:
    """``1 / e'R^{-1}p`` for the model as given (one when the phase mean is one)."""
    return float(_raw_params(m)[1])


def derive_params(m: PhaseTypeModel, normalize: bool = False) -> DiffusionParams:
    """Compute the drift and covariance coefficients for ``m``.

    The phase distribution must have mean one (``zeta == 1``). When it does not
    and ``normalize`` is set, service rates are rescaled ``v <- v / zeta``,
    which makes ``zeta`` exactly one; otherwise :class:`NonUnitMeanPhaseError`.

    ``sigma`` is the symmetric positive-definite square root of ``Sigma``.
    """
    R, zeta, gamma = _raw_params(m)
    if abs(zeta - 1.0) > ZETA_TOL:
        if not normalize:
            raise NonUnitMeanPhaseError(
                f"phase-type mean is 1/zeta = {float(1.0 / zeta)!r}, expected 1; pass normalize to rescale v",
                "$.v",
            )
        m = replace(m, v=m.v / zeta)
        R, zeta, gamma = _raw_params(m)

    d = m.d
    eye = np.eye(d)
    # H[0] is built from p, H[k] from row k-1 of P.
    H = np.empty((d + 1, d, d))
    H[0] = _h_matrix(m.p)
    for k in range(d):
        H[k + 1] = _h_matrix(m.P[k])
    Sigma = (
        np.diag(m.p) * m.ca2
        + H[0]
        + np.einsum("k,kij->ij", gamma * m.v, H[1:])
        + (eye - m.P.T) @ np.diag(m.v) @ np.diag(gamma) @ (eye - m.P)
    )
    Sigma = 0.5 * (Sigma + Sigma.T)
    w, U = np.linalg.eigh(Sigma)
    min_eig = float(w[0])
    if not min_eig > ELLIPTIC_REL_TOL * np.trace(Sigma) / d:
        raise NonEllipticCovarianceError(
            f"noise covariance is not uniformly elliptic (smallest eigenvalue {min_eig!r})"
        )
    sigma = (U * np.sqrt(w)) @ U.T
    sigma = 0.5 * (sigma + sigma.T)

    arrays = dict(
        R=R,
        gamma=gamma,
        Sigma=Sigma,
        sigma=sigma,
        drift_constant=-m.beta * m.p,
        drift_linear=-R,
        drift_kink=(R - m.alpha * eye) @ m.p,
        H=H,
    )
    for arr in arrays.values():
        arr.setflags(write=False)
    return DiffusionParams(model=m, zeta=float(zeta), min_eig=min_eig, **arrays)


def drift(params: DiffusionParams, x) -> np.ndarray:
    """Exact piecewise-linear drift ``-beta p - R x + (R - alpha I) p (e'x)^+``.

    ``x`` may carry leading batch axes; the last axis is the state.
    """
    x = np.asarray(x, dtype=float)
    s = np.maximum(x.sum(axis=-1), 0.0)
    return params.drift_constant + x @ params.drift_linear.T + s[..., None] * params.drift_kink


def operator_constant(params: DiffusionParams) -> float:
    """Lipschitz constant of the drift, ``||R||_op + ||(R - alpha I) p e'||_op``."""
    d = params.d
    kink = np.outer(params.drift_kink, np.ones(d))
    return float(np.linalg.norm(params.R, 2) + np.linalg.norm(kink, 2))


def linear_growth_bound(params: DiffusionParams) -> float:
    """Constant ``C`` with ``|g(x)| <= C (1 + |x|)`` for every ``x``."""
    eye = np.eye(params.d)
    return float(
        operator_constant(params)
        + np.linalg.norm(params.Sigma, "fro")
        + 1.0
        + np.linalg.norm(params.R - params.alpha * eye, 2)
        + abs(params.beta)
    )


def moment_constant(params: DiffusionParams, m: int) -> float:
    """Exponential growth rate ``2 m^2 C`` of the m-th moment bound (``m >= 2``)."""
    if m < 2:
        raise ValueError("m must be >= 2")
    return 2.0 * m * m * linear_growth_bound(params)


def exponential_service_model(alpha: float, beta: float, ca2: float = 1.0) -> PhaseTypeModel:
    """Single-phase (exponential, unit-mean) service: the one-dimensional case."""
    return PhaseTypeModel(P=[[0.0]], v=[1.0], p=[1.0], alpha=alpha, beta=beta, ca2=ca2)
