"""Numerics for the renormalized stochastic sine-Gordon wave equation on T^2."""

__version__ = "0.1.0"
