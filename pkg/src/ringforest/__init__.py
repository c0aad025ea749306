"""Locality-aware overlay, dataflow forest, and adaptive packet routing."""

__version__ = "0.1.0"
