"""Numerical bounds for identification via discrete memoryless channels."""

__version__ = "0.1.0"
