"""Exact ZF performance under rank-1 Rician fading: series, HGM and Monte Carlo engines."""

__version__ = "0.1.0"
