"""Chance-constrained trajectory optimization with certified collision-risk bounds."""

__version__ = "0.1.0"
