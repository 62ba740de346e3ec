"""Finite-blocklength limits of lossless compression with side information."""

__version__ = "0.1.0"
