"""Rough-path lifts, p-variation and area-anomaly Monte Carlo."""

__version__ = "0.1.0"
