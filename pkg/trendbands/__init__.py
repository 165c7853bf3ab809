"""Kernel trend estimates with autoregressive wild bootstrap confidence bands."""

__version__ = "0.1.0"
