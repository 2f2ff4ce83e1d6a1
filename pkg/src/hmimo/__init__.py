"""Wavenumber-domain representation of holographic MIMO channels."""

__version__ = "0.1.0"
