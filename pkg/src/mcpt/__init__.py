"""Spintronic probability-tunable TRNG and Monte Carlo slab transport simulator."""

__version__ = "0.1.0"
