"""Charge prediction augmented by charge-definition attention."""
__version__ = "0.1.0"
