"""Inverse scattering for one-dimensional Schrodinger operators with steplike potentials."""

__version__ = "0.1.0"
