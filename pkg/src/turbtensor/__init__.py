"""Discretized neural Tucker factorization for Richardson-number regression."""

__version__ = "0.1.0"
