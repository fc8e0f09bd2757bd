"""Perturbative factorisation of trapped-ion Raman Lambda-scheme dynamics."""

__version__ = "0.1.0"
