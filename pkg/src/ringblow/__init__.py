"""Numerical laboratory for ring blow-up of the axially symmetric 3d cubic NLS."""

__version__ = "0.1.0"
