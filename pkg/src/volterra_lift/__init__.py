"""Simulation and verification tools for stochastic Volterra equations and
their Markovian forward-curve lift in weighted Sobolev spaces."""

__version__ = "0.1.0"
