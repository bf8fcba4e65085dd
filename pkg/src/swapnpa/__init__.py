"""Real versus complex quantum bounds in the entanglement-swapping line."""

__version__ = "0.1.0"
