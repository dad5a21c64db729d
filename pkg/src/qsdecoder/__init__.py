"""Quantum search decoding with power-law advice."""
__version__ = "0.1.0"
