"""Spatially constrained robust mixture regression."""

__version__ = "0.1.0"
