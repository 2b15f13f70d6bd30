"""Correlated charge-burst simulator: particle impacts, trapped charge, offset-charge jumps and qubit errors."""

__version__ = "0.1.0"
