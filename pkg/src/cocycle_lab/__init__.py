"""Numerics for parameter-dependent random products of SL(2,R) matrices."""

__version__ = "0.1.0"
