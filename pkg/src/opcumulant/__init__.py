"""Effective generators of time-coarse-grained linear dynamics."""
__version__ = "0.1.0"
