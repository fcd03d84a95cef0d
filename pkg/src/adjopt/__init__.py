"""Adjoint-based PDE-constrained optimal control and shape optimization on P1 triangles."""

__version__ = "0.1.0"
