"""Nonconforming virtual elements for the 2D Poisson problem with dual-space stabilizations."""

__version__ = "0.1.0"
