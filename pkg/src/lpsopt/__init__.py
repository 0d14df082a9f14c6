"""Adjoint-based search for extreme Navier-Stokes initial data under L^q constraints."""

__version__ = "0.1.0"
