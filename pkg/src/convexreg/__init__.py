"""Numerical laboratory for boundary regularity of non-divergence elliptic equations."""

__version__ = "0.1.0"
