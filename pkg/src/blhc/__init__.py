"""Homotopy continuation for the implicitly discretized Buckley-Leverett equation."""

__version__ = "0.1.0"
