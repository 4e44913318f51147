"""Numerical tools for the destruction of invariant circles and tori in twist maps."""

__version__ = "0.1.0"
