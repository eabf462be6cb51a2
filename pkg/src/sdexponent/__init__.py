"""Sphere-decoding complexity exponents for linear dispersive space-time codes."""

__version__ = "0.1.0"
