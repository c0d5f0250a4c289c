"""Limiting diffusion of many-server queues with phase-type service: Euler-Maruyama approximation and diagnostics."""

__version__ = "0.1.0"
