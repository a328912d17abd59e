"""Numerical toolkit for branched special Lagrangian deformations."""

__version__ = "0.1.0"
