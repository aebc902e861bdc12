"""Adapted integral representations of random variables against Hoelder processes."""
__version__ = "0.1.0"
