"""Adiabatic reduction of 2D wave problems to effective 1D Hamiltonians."""

__version__ = "0.1.0"
