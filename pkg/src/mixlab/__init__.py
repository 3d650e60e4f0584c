"""Dirichlet-form comparison laboratory for the interchange process."""

__version__ = "0.1.0"
