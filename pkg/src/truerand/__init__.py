"""Entropy accounting, two-universal hashing and Monte Carlo checks for noisy
beam-splitter quantum random number generators."""

__version__ = "0.1.0"
