"""Stochastic macro-equilibrium toolkit for productivity dispersion."""

__version__ = "0.1.0"
