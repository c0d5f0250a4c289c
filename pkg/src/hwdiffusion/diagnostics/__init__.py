"""Diagnostics: Lyapunov drift certificate, Jacobian flows and Bismut gradients, occupation times."""

from .bismut import bismut_gradient, finite_difference_gradient, jacobian_flow, mollified_path
from .lyapunov import (
    DriftReport,
    LyapunovSpec,
    lyapunov_check,
    lyapunov_value_grad_hess,
    phi,
    phi_inner,
    phi_prime,
    phi_second,
    radial_grid,
    search_kappa,
    solve_qtilde,
)
from .occupation import OccupationEstimate, occupation_phi_eps, occupation_sweep, occupation_time, occupation_weight

__all__ = [
    "DriftReport",
    "LyapunovSpec",
    "OccupationEstimate",
    "bismut_gradient",
    "finite_difference_gradient",
    "jacobian_flow",
    "lyapunov_check",
    "lyapunov_value_grad_hess",
    "mollified_path",
    "occupation_phi_eps",
    "occupation_sweep",
    "occupation_time",
    "occupation_weight",
    "phi",
    "phi_inner",
    "phi_prime",
    "phi_second",
    "radial_grid",
    "search_kappa",
    "solve_qtilde",
]
