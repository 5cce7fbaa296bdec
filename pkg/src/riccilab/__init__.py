"""Numerical laboratory for Ricci flow on symmetry-reduced geometries."""

__version__ = "0.1.0"
