"""Generalized Szasz analytic functions on toric Kähler models."""

__version__ = "0.1.0"
