"""Supervised randomization for experimental customer targeting."""

__version__ = "0.1.0"
