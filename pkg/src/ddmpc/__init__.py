"""Data-driven model predictive control from a single measured trajectory."""
__version__ = "0.1.0"
