"""Numerics for Lipschitz dynamical systems."""

__version__ = "0.1.0"
