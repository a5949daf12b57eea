"""Soft survival trees trained by node-based decomposition."""

__version__ = "0.1.0"
