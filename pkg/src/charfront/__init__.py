"""Characteristic-front solvers for short-pulse focusing data."""

__version__ = "0.1.0"
