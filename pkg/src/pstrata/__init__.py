"""Principal causal effects with auxiliary variables."""

__version__ = "0.1.0"
