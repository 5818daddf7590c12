"""Exact-diagonalization checks of particle propagation bounds for bosonic lattice models."""

__version__ = "0.1.0"
