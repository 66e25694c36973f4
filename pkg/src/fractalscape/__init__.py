"""Diagnostics for fractal (non-smooth) objectives in policy optimization."""

__version__ = "0.1.0"
