"""Adjoint weak factorization along monomial curves."""

__version__ = "0.1.0"
