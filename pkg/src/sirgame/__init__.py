"""Solver for the two-type SIR social-distancing game and its variance-constrained equilibria."""

__version__ = "0.1.0"
