"""Simulation of variable-time amplitude amplification and the quantum linear-system solver
built on it, with exact oracle-query ledgers."""

__version__ = "0.1.0"
