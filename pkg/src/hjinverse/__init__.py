"""Bayesian recovery of white-noise forcing for Burgers and Hamilton-Jacobi equations."""

__version__ = "0.1.0"
