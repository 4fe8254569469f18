"""Smooth decompositions of the identity built from localized projection operators."""
__version__ = "0.1.0"
