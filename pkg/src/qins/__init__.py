"""Spectral solver and verification suite for a quasi-incompressible
two-phase mixture flow model on a torus or a free-slip rectangle."""

__version__ = "0.1.0"
