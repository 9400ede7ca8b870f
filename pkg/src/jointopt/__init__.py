"""Distributed stochastic optimisation with concurrent learning of a misspecified parameter."""

__version__ = "0.1.0"
