"""Hyperdimensional scene memories with compositional spatial question answering."""

__version__ = "0.1.0"
