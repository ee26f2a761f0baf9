"""Relay-driven lattice heat equation: switching fronts, rate constant and admissibility."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
