"""Brownian motion on combs: pre-limit simulators, the sticky limit process and effective PDE solvers."""

__version__ = "0.1.0"
