"""Doubly-reactive navigation among partially familiar planar obstacles."""

__version__ = "0.1.0"
