"""Named test functions ``h: R^d -> R``, vectorised over leading axes."""

from __future__ import annotations

import re

import numpy as np


def tanh_sum(x):
    return np.tanh(np.sum(x, axis=-1))


def indicator_positive(x):
    return (np.sum(x, axis=-1) > 0).astype(float)


def identity_sum(x):
    return np.sum(x, axis=-1)


def coordinate_tanh(i):
    def h(x):
        return np.tanh(x[..., i])

    h.__name__ = f"coordinate_tanh_{i}"
    return h


def coordinate(i):
    def h(x):
        return x[..., i]

    h.__name__ = f"coordinate_{i}"
    return h


_FIXED = {
    "tanh-sum": tanh_sum,
    "indicator-positive": indicator_positive,
    "identity-sum": identity_sum,
}
# sup |h| for the bounded ones; None means unbounded
BOUNDS = {"tanh-sum": 1.0, "indicator-positive": 1.0, "identity-sum": None}


def resolve(name: str, d: int | None = None):
    """Look up ``name``: ``tanh-sum``, ``indicator-positive``, ``identity-sum``,
    ``coordinate-tanh-<i>`` or ``coordinate-<i>`` (0-based ``i``)."""
    if name in _FIXED:
        return _FIXED[name]
    m = re.fullmatch(r"coordinate(-tanh)?-(\d+)", name)
    if m:
        i = int(m.group(2))
        if d is not None and i >= d:
            raise ValueError(f"test function {name!r} needs dimension > {i}, model has {d}")
        return coordinate_tanh(i) if m.group(1) else coordinate(i)
    raise ValueError(f"unknown test function {name!r}")


def bound(name: str):
    if name.startswith("coordinate-tanh-"):
        return 1.0
    if name.startswith("coordinate-"):
        return None
    return BOUNDS[name]
