"""Shuffling Momentum Gradient: optimizers, convergence-bound checks and experiments."""

__version__ = "0.1.0"
