"""Variational neural temporal point processes with Hawkes simulation and baselines."""

__version__ = "0.1.0"
