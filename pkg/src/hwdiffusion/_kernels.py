"""Compiled inner loops. Noise is always drawn by the caller."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def em_chunk(x, const, lin, kink, scaled_sigma, eta, xi, out):
    """Advance ``x`` in place through ``len(xi)`` Euler-Maruyama steps.

    ``scaled_sigma`` is ``sqrt(eta) * sigma``. Visited states go to ``out``.
    Returns the index of the first non-finite state, or -1.
    """
    n, d = xi.shape
    g = np.empty(d)
    for k in range(n):
        s = 0.0
        for i in range(d):
            s += x[i]
        if s < 0.0:
            s = 0.0
        for i in range(d):
            acc = const[i] + s * kink[i]
            for j in range(d):
                acc += lin[i, j] * x[j]
            g[i] = acc
        bad = False
        for i in range(d):
            noise = 0.0
            for j in range(d):
                noise += scaled_sigma[i, j] * xi[k, j]
            x[i] = x[i] + g[i] * eta + noise
            if not np.isfinite(x[i]):
                bad = True
        for i in range(d):
            out[k, i] = x[i]
        if bad:
            return k
    return -1
