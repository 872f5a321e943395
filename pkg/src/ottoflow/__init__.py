"""Stochastic differential geometry on manifolds and on Wasserstein space."""

__version__ = "0.1.0"
