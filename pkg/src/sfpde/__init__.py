"""Spectral Petrov-Galerkin solver and forward UQ drivers for space-time
fractional diffusion with random fractional orders and additive colored noise."""

__version__ = "0.1.0"
